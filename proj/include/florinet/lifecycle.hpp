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

#ifndef FLORINET_LIFECYCLE_HPP_
#define FLORINET_LIFECYCLE_HPP_

#include <optional>
#include <string>

namespace florinet {

enum class Lifecycle { kCreated, kRunning, kPaused, kCompleted, kCancelled, kFailed };

/// Everything that may move a task between lifecycle states. kPause, kResume
/// and kCancel come from operators; the rest are raised by the task loop.
enum class LifecycleEvent { kStart, kPause, kResume, kCancel, kComplete, kFail };

std::string to_string(Lifecycle s);
std::string to_string(LifecycleEvent e);
Lifecycle lifecycle_from(const std::string& s);
/// Parses an operator action; only pause, resume and cancel are accepted.
std::optional<LifecycleEvent> control_action_from(const std::string& s);

bool is_terminal(Lifecycle s);

/// nullopt when the event is not an edge out of `from`.
std::optional<Lifecycle> next_state(Lifecycle from, LifecycleEvent event);

/// Throws Error("terminal") out of absorbing states and
/// Error("illegal_transition") for any other missing edge.
Lifecycle transition(Lifecycle from, LifecycleEvent event);

}  // namespace florinet

#endif  // FLORINET_LIFECYCLE_HPP_
