// Copyright 2026 The GridPilot Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GRIDPILOT_SUPERVISOR_HPP_
#define GRIDPILOT_SUPERVISOR_HPP_

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gridpilot/core.hpp"

namespace gridpilot {

struct ActuationLost : Error {
  using Error::Error;
};

/// Liveness message every module publishes each cycle. A module that is
/// hung-but-alive keeps sending, with the spatiotemporal stamp frozen.
struct Heartbeat {
  std::string module_id;
  std::uint64_t seq = 0;
  SpatioTemporalStamp stamp;
  double sent_at = 0.0;
};

/// Wire record: `module_id seq t x y theta sent_at`.
inline std::string format_heartbeat(const Heartbeat& hb) {
  std::ostringstream out;
  out.precision(17);
  out << hb.module_id << " " << hb.seq << " " << hb.stamp.t << " "
      << hb.stamp.x << " " << hb.stamp.y << " " << hb.stamp.theta << " "
      << hb.sent_at;
  return out.str();
}

inline Heartbeat parse_heartbeat(const std::string& line) {
  std::istringstream in(line);
  Heartbeat hb;
  double t = 0.0, x = 0.0, y = 0.0, theta = 0.0;
  if (!(in >> hb.module_id >> hb.seq >> t >> x >> y >> theta >> hb.sent_at)) {
    throw FormatError("parse_heartbeat: bad record: " + line);
  }
  hb.stamp = {t, x, y, theta};
  return hb;
}

struct SupervisorConfig {
  double period = 0.05;            // nominal heartbeat period, seconds
  int silent_after_periods = 3;    // missed periods before a module is silent
  int frozen_count = 5;            // identical stamps before a module is frozen
  int max_restarts = 3;            // within restart_window before giving up
  double restart_window = 60.0;    // seconds
  double moving_speed = 0.1;       // m/s gate for frozen-stamp detection
  double daemon_period = 0.05;     // peer daemon heartbeat period
  int peer_suspect_periods = 2;
  int peer_dead_periods = 4;
};

enum class ModuleState { kHealthy, kSilent, kFrozen, kRestarting, kFailed };
enum class ActionKind { kNone, kRestart, kEscalate, kEmergencyStop };

struct Action {
  ActionKind kind = ActionKind::kNone;
  std::string target;

  bool fired() const { return kind != ActionKind::kNone; }
};

/// Watchdog bookkeeping for one supervised module.
struct ModuleHealth {
  std::string module_id;
  ModuleState state = ModuleState::kHealthy;
  ModuleState last_fault = ModuleState::kHealthy;  // kSilent or kFrozen
  std::uint64_t last_seq = 0;
  SpatioTemporalStamp last_stamp;
  double last_heartbeat_at = 0.0;
  double last_restart_at = -kInfinity;
  int consecutive_frozen = 0;  // heartbeats whose stamp repeated the previous
  int restart_count = 0;
  std::deque<double> recent_restarts;
  bool seen = false;
};

namespace detail {

inline Action issue_restart_or_escalate(ModuleHealth& health, double now,
                                        const SupervisorConfig& cfg,
                                        ModuleState detected) {
  while (!health.recent_restarts.empty() &&
         now - health.recent_restarts.front() > cfg.restart_window) {
    health.recent_restarts.pop_front();
  }
  if (static_cast<int>(health.recent_restarts.size()) >= cfg.max_restarts) {
    health.state = ModuleState::kFailed;
    health.last_fault = detected;
    return {ActionKind::kEscalate, health.module_id};
  }
  health.last_fault = detected;
  health.recent_restarts.push_back(now);
  ++health.restart_count;
  health.last_restart_at = now;
  health.state = ModuleState::kRestarting;
  return {ActionKind::kRestart, health.module_id};
}

}  // namespace detail

/// Feeds one heartbeat (or a timeout tick when absent) through the module
/// watchdog. Silent: no heartbeat for silent_after_periods. Frozen: the
/// stamp repeats across frozen_count consecutive beats while the ego is
/// moving. Either detection emits one restart; after max_restarts within
/// the window the module is failed and the action escalates.
inline Action observe(ModuleHealth& health, const std::optional<Heartbeat>& hb,
                      double now, bool ego_moving,
                      const SupervisorConfig& cfg) {
  if (health.state == ModuleState::kFailed) {
    return {};
  }
  if (hb) {
    health.last_seq = hb->seq;
    health.last_heartbeat_at = now;
    const bool repeated = health.seen && hb->stamp == health.last_stamp;
    health.last_stamp = hb->stamp;
    health.seen = true;
    if (repeated && ego_moving) {
      ++health.consecutive_frozen;
    } else {
      health.consecutive_frozen = 0;
      if (health.state == ModuleState::kRestarting ||
          health.state == ModuleState::kSilent) {
        health.state = ModuleState::kHealthy;
      }
    }
    // frozen_count identical stamps = the first plus its repeats
    if (health.consecutive_frozen + 1 >= cfg.frozen_count) {
      health.consecutive_frozen = 0;
      return detail::issue_restart_or_escalate(health, now, cfg,
                                               ModuleState::kFrozen);
    }
    if (health.state == ModuleState::kSilent) {
      health.state = ModuleState::kHealthy;
    }
    return {};
  }

  // Timeout tick.
  const double silent_after = cfg.silent_after_periods * cfg.period;
  const double reference = health.state == ModuleState::kRestarting
                               ? std::max(health.last_heartbeat_at,
                                          health.last_restart_at)
                               : health.last_heartbeat_at;
  if (now - reference > silent_after) {
    return detail::issue_restart_or_escalate(health, now, cfg,
                                             ModuleState::kSilent);
  }
  return {};
}

enum class PeerState { kAlive, kSuspect, kDead };

/// A remote daemon as seen from this host.
struct DaemonPeer {
  std::string daemon_id;
  std::string host_id;
  double last_seen = 0.0;
  PeerState state = PeerState::kAlive;
  bool stop_emitted = false;
};

/// Marks the peer from its heartbeat age: suspect after two missed daemon
/// periods, dead after four. The dead transition emits exactly one
/// emergency stop; a resumed heartbeat revives the peer.
inline Action observe_peer(DaemonPeer& peer, double now,
                           const SupervisorConfig& cfg) {
  const double age = now - peer.last_seen;
  if (age <= cfg.peer_suspect_periods * cfg.daemon_period) {
    peer.state = PeerState::kAlive;
    peer.stop_emitted = false;
    return {};
  }
  if (age <= cfg.peer_dead_periods * cfg.daemon_period) {
    if (peer.state != PeerState::kDead) {
      peer.state = PeerState::kSuspect;
    }
    return {};
  }
  peer.state = PeerState::kDead;
  if (!peer.stop_emitted) {
    peer.stop_emitted = true;
    return {ActionKind::kEmergencyStop, peer.daemon_id};
  }
  return {};
}

// ---------------------------------------------------------------------------
// Redundant actuation
// ---------------------------------------------------------------------------

struct ActuationCommand {
  double v_cmd = 0.0;
  double delta_cmd = 0.0;
};

struct ActuationChannel {
  std::string name;
  bool up = true;
  std::uint64_t sent = 0;
  ActuationCommand last;
};

/// Sends on the first healthy channel in order (primary first); the backup
/// takes over in the same cycle. Both channels down is an actuation loss.
inline std::size_t actuate(const ActuationCommand& cmd,
                           std::span<ActuationChannel> channels) {
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (channels[i].up) {
      channels[i].last = cmd;
      ++channels[i].sent;
      return i;
    }
  }
  throw ActuationLost("actuate: all actuation channels down");
}

}  // namespace gridpilot

#endif  // GRIDPILOT_SUPERVISOR_HPP_
