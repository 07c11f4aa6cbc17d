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

// Reference external aggregator: FedAvg over the interims named in the
// manifest. Usage: florinet-avg-aggregator <manifest.json>
#include <iostream>
#include <json.hpp>

#include "florinet/codec.hpp"
#include "florinet/fileio.hpp"

int main(int argc, char** argv) {
  using namespace florinet;
  if (argc != 2) {
    std::cerr << "usage: " << argv[0] << " <manifest.json>\n";
    return 2;
  }
  try {
    const auto manifest = nlohmann::json::parse(read_text(argv[1]));
    const ModelVector current = decode_model(read_file(manifest.at("model_path").get<std::string>()));
    ModelVector total = ModelVector::Zero(current.size());
    std::size_t count = 0;
    for (const auto& interim : manifest.at("interims")) {
      total += decode_model(read_file(interim.at("path").get<std::string>()));
      count += interim.at("count").get<std::size_t>();
    }
    if (count == 0) {
      std::cerr << "no contributors\n";
      return 1;
    }
    const ModelVector next = current + total / static_cast<double>(count);
    write_file(manifest.at("output_path").get<std::string>(), encode_payload(next));
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  return 0;
}
