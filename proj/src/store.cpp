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

#include "florinet/store.hpp"

#include <algorithm>

#include "florinet/error.hpp"
#include "florinet/fileio.hpp"

namespace florinet {
namespace {

void check_key(const std::string& key) {
  if (key.empty() || key.front() == '/' || key.find("..") != std::string::npos ||
      key.find('\\') != std::string::npos) {
    throw Error("invalid_key", "bad store key '" + key + "'");
  }
}

}  // namespace

std::optional<Bytes> MemoryStore::get(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = data_.find(key);
  if (it == data_.end()) return std::nullopt;
  return it->second;
}

void MemoryStore::put(const std::string& key, ByteView value) {
  check_key(key);
  std::lock_guard lock(mu_);
  data_[key] = Bytes(value.begin(), value.end());
}

void MemoryStore::remove(const std::string& key) {
  std::lock_guard lock(mu_);
  data_.erase(key);
}

std::vector<std::string> MemoryStore::list(const std::string& prefix) const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (auto it = data_.lower_bound(prefix); it != data_.end() && it->first.starts_with(prefix); ++it) {
    out.push_back(it->first);
  }
  return out;
}

FileStore::FileStore(std::filesystem::path root) : root_(std::move(root)) {
  std::error_code ec;
  std::filesystem::create_directories(root_, ec);
  if (ec) throw Error("store_io", "cannot create " + root_.string() + ": " + ec.message());
}

std::filesystem::path FileStore::path_of(const std::string& key) const {
  check_key(key);
  return root_ / std::filesystem::path(key);
}

std::optional<Bytes> FileStore::get(const std::string& key) const {
  const auto p = path_of(key);
  if (!std::filesystem::is_regular_file(p)) return std::nullopt;
  return read_file(p);
}

void FileStore::put(const std::string& key, ByteView value) { write_file(path_of(key), value); }

void FileStore::remove(const std::string& key) {
  std::error_code ec;
  std::filesystem::remove(path_of(key), ec);
}

std::vector<std::string> FileStore::list(const std::string& prefix) const {
  std::vector<std::string> out;
  std::error_code ec;
  for (auto it = std::filesystem::recursive_directory_iterator(root_, ec);
       !ec && it != std::filesystem::recursive_directory_iterator(); it.increment(ec)) {
    if (!it->is_regular_file()) continue;
    auto rel = std::filesystem::relative(it->path(), root_).generic_string();
    if (rel.ends_with(".tmp")) continue;
    if (rel.starts_with(prefix)) out.push_back(std::move(rel));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace florinet
