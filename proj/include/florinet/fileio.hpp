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

#ifndef FLORINET_FILEIO_HPP_
#define FLORINET_FILEIO_HPP_

#include <filesystem>
#include <string>

#include "florinet/codec.hpp"

namespace florinet {

Bytes read_file(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);
/// Writes through a sibling temp file and rename, creating parent directories.
void write_file(const std::filesystem::path& path, ByteView data);
inline void write_text(const std::filesystem::path& path, std::string_view text) {
  write_file(path, view_of(text));
}

}  // namespace florinet

#endif  // FLORINET_FILEIO_HPP_
