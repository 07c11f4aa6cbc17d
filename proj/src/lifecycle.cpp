/*
 * Copyright 2026 The Florinet Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "florinet/lifecycle.hpp"

#include "florinet/error.hpp"

namespace florinet {

std::string to_string(Lifecycle s) {
  switch (s) {
    case Lifecycle::kCreated: return "created";
    case Lifecycle::kRunning: return "running";
    case Lifecycle::kPaused: return "paused";
    case Lifecycle::kCompleted: return "completed";
    case Lifecycle::kCancelled: return "cancelled";
    case Lifecycle::kFailed: return "failed";
  }
  return "unknown";
}

std::string to_string(LifecycleEvent e) {
  switch (e) {
    case LifecycleEvent::kStart: return "start";
    case LifecycleEvent::kPause: return "pause";
    case LifecycleEvent::kResume: return "resume";
    case LifecycleEvent::kCancel: return "cancel";
    case LifecycleEvent::kComplete: return "complete";
    case LifecycleEvent::kFail: return "fail";
  }
  return "unknown";
}

Lifecycle lifecycle_from(const std::string& s) {
  for (auto l : {Lifecycle::kCreated, Lifecycle::kRunning, Lifecycle::kPaused, Lifecycle::kCompleted,
                 Lifecycle::kCancelled, Lifecycle::kFailed}) {
    if (to_string(l) == s) return l;
  }
  throw Error("corrupt_state", "unknown lifecycle '" + s + "'");
}

std::optional<LifecycleEvent> control_action_from(const std::string& s) {
  if (s == "pause") return LifecycleEvent::kPause;
  if (s == "resume") return LifecycleEvent::kResume;
  if (s == "cancel") return LifecycleEvent::kCancel;
  return std::nullopt;
}

bool is_terminal(Lifecycle s) {
  return s == Lifecycle::kCompleted || s == Lifecycle::kCancelled || s == Lifecycle::kFailed;
}

std::optional<Lifecycle> next_state(Lifecycle from, LifecycleEvent event) {
  using L = Lifecycle;
  using E = LifecycleEvent;
  switch (from) {
    case L::kCreated:
      if (event == E::kStart) return L::kRunning;
      break;
    case L::kRunning:
      if (event == E::kPause) return L::kPaused;
      if (event == E::kCancel) return L::kCancelled;
      if (event == E::kComplete) return L::kCompleted;
      if (event == E::kFail) return L::kFailed;
      break;
    case L::kPaused:
      if (event == E::kResume) return L::kRunning;
      if (event == E::kCancel) return L::kCancelled;
      break;
    default:
      break;
  }
  return std::nullopt;
}

Lifecycle transition(Lifecycle from, LifecycleEvent event) {
  if (auto to = next_state(from, event)) return *to;
  if (is_terminal(from)) {
    throw Error("terminal", "task is " + to_string(from) + "; cannot " + to_string(event));
  }
  throw Error("illegal_transition", "cannot " + to_string(event) + " a " + to_string(from) + " task");
}

}  // namespace florinet
