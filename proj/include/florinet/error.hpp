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

#ifndef FLORINET_ERROR_HPP_
#define FLORINET_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace florinet {

// Every failure surfaced by the library carries a stable machine-readable
// code. The wire layer maps codes onto HTTP statuses and error envelopes.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message, bool retryable = false)
      : std::runtime_error(message), code_(std::move(code)), retryable_(retryable) {}

  const std::string& code() const noexcept { return code_; }
  bool retryable() const noexcept { return retryable_; }

 private:
  std::string code_;
  bool retryable_;
};

}  // namespace florinet

#endif  // FLORINET_ERROR_HPP_
