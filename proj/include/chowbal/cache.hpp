///
/// \file cache.hpp
///
/// Content-addressed store for grids and Gram matrices under the output
/// directory. Entries are keyed by a hash of the producing config section and
/// carry a payload hash; a hit is only trusted after the payload re-hashes to
/// the stored value, otherwise the entry is recomputed.
///
#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include <json.hpp>

namespace chowbal {

inline std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

class FileCache {
 public:
  FileCache(std::filesystem::path dir, bool enabled) : dir_(std::move(dir)), enabled_(enabled) {}

  /// Fetch the payload for `key_source` or compute and store it. `hit` (when
  /// given) reports whether a validated cache entry was used.
  nlohmann::json get_or_compute(const std::string& kind, const nlohmann::json& key_source,
                                const std::function<nlohmann::json()>& compute,
                                bool* hit = nullptr) {
    if (hit) *hit = false;
    if (!enabled_) return compute();
    const std::string key = fnv1a_hex(kind + ":" + key_source.dump());
    const std::filesystem::path file = dir_ / (kind + "-" + key + ".json");

    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw std::runtime_error("cache: cannot create " + dir_.string());

    if (std::filesystem::exists(file)) {
      try {
        std::ifstream in(file);
        nlohmann::json entry = nlohmann::json::parse(in);
        const std::string payload = entry.at("payload").dump();
        if (entry.at("hash").get<std::string>() == fnv1a_hex(payload)) {
          std::cerr << "[chowbal] cache hit: " << kind << " " << key << "\n";
          if (hit) *hit = true;
          return entry.at("payload");
        }
        std::cerr << "[chowbal] warning: corrupted cache entry " << file.string()
                  << "; recomputing\n";
      } catch (const std::exception& e) {
        std::cerr << "[chowbal] warning: unreadable cache entry " << file.string() << " ("
                  << e.what() << "); recomputing\n";
      }
    }

    nlohmann::json payload = compute();
    nlohmann::json entry = {{"hash", fnv1a_hex(payload.dump())}, {"payload", payload}};
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cache: cannot write " + file.string());
    out << entry.dump(1) << "\n";
    return payload;
  }

 private:
  std::filesystem::path dir_;
  bool enabled_;
};

}  // namespace chowbal
