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

#ifndef FLORINET_STORE_HPP_
#define FLORINET_STORE_HPP_

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "florinet/codec.hpp"

namespace florinet {

/// Flat key-value persistence. Keys are '/'-separated relative paths
/// such as "tasks/<id>/state.json".
class KeyValueStore {
 public:
  virtual ~KeyValueStore() = default;
  virtual std::optional<Bytes> get(const std::string& key) const = 0;
  virtual void put(const std::string& key, ByteView value) = 0;
  virtual void remove(const std::string& key) = 0;
  /// Sorted keys starting with prefix.
  virtual std::vector<std::string> list(const std::string& prefix) const = 0;
};

class MemoryStore final : public KeyValueStore {
 public:
  std::optional<Bytes> get(const std::string& key) const override;
  void put(const std::string& key, ByteView value) override;
  void remove(const std::string& key) override;
  std::vector<std::string> list(const std::string& prefix) const override;

 private:
  mutable std::mutex mu_;
  std::map<std::string, Bytes> data_;
};

/// Files under a root directory; writes are atomic per key.
class FileStore final : public KeyValueStore {
 public:
  explicit FileStore(std::filesystem::path root);

  std::optional<Bytes> get(const std::string& key) const override;
  void put(const std::string& key, ByteView value) override;
  void remove(const std::string& key) override;
  std::vector<std::string> list(const std::string& prefix) const override;

  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path path_of(const std::string& key) const;

  std::filesystem::path root_;
};

}  // namespace florinet

#endif  // FLORINET_STORE_HPP_
