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

#ifndef FLORINET_SUBPROCESS_HPP_
#define FLORINET_SUBPROCESS_HPP_

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

namespace florinet {

struct ProcessResult {
  int exit_code = -1;
  bool timed_out = false;
  std::string stdout_text;
  std::string stderr_text;
};

/// Runs argv[0] (PATH lookup) with stdout/stderr captured through files in
/// `workdir`. The child is killed when `timeout` elapses.
ProcessResult run_process(const std::vector<std::string>& argv,
                          const std::filesystem::path& workdir,
                          std::chrono::milliseconds timeout);

/// mkdtemp under the system temp directory; removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& prefix = "florinet");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace florinet

#endif  // FLORINET_SUBPROCESS_HPP_
