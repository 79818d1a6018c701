#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <zlib.h>

#include <json.hpp>

#include "adave/attention.hpp"
#include "adave/errors.hpp"

namespace adave {

struct CacheKey {
    int timestep = 0;
    int block = 0;
    auto operator<=>(const CacheKey&) const = default;
};

// Write-once store of SparseKV per (timestep, block). The joint pass fills
// it, seal() marks the hand-off, and only a sealed cache serves reads: an
// intermediate frame can never observe a cache that is still being written,
// and a missing entry is always a hard error.
class KVCache {
public:
    void put(const CacheKey& key, SparseKV kv) {
        if (sealed_)
            throw CacheSealed("put on sealed cache (t=" + std::to_string(key.timestep) +
                              ", block=" + std::to_string(key.block) + ")");
        auto [it, inserted] = entries_.emplace(key, std::move(kv));
        if (!inserted)
            throw DuplicateKey("duplicate cache key (t=" + std::to_string(key.timestep) +
                               ", block=" + std::to_string(key.block) + ")");
    }

    void seal() { sealed_ = true; }
    bool sealed() const { return sealed_; }

    const SparseKV& get(const CacheKey& key) const {
        if (!sealed_) throw CacheNotSealed("get before seal");
        auto it = entries_.find(key);
        if (it == entries_.end())
            throw CacheMiss("cache miss (t=" + std::to_string(key.timestep) +
                            ", block=" + std::to_string(key.block) + ")");
        return it->second;
    }

    std::size_t size() const { return entries_.size(); }
    const std::map<CacheKey, SparseKV>& entries() const { return entries_; }

    // Persists as a JSON manifest plus one blob of concatenated SparseKV
    // records, each with its own CRC32 so silent corruption cannot pass as
    // editing artifacts.
    void save(const std::filesystem::path& dir) const {
        if (!sealed_) throw CacheNotSealed("save requires a sealed cache");
        std::filesystem::create_directories(dir);
        nlohmann::json manifest;
        manifest["layout_version"] = kSparseKvLayoutVersion;
        manifest["blob"] = "kv.bin";
        manifest["entries"] = nlohmann::json::array();

        std::ofstream blob(dir / "kv.bin", std::ios::binary);
        if (!blob) throw IoError("cannot open for writing: " + (dir / "kv.bin").string());
        std::size_t offset = 0;
        for (const auto& [key, kv] : entries_) {
            const std::vector<std::uint8_t> bytes = serialize_sparse_kv(kv);
            const auto crc =
                ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()),
                        static_cast<uInt>(bytes.size()));
            manifest["entries"].push_back({{"timestep", key.timestep},
                                           {"block", key.block},
                                           {"offset", offset},
                                           {"bytes", bytes.size()},
                                           {"crc32", static_cast<std::uint32_t>(crc)}});
            blob.write(reinterpret_cast<const char*>(bytes.data()),
                       static_cast<std::streamsize>(bytes.size()));
            offset += bytes.size();
        }
        if (!blob) throw IoError("short write: " + (dir / "kv.bin").string());
        blob.close();

        std::ofstream mf(dir / "manifest.json");
        if (!mf) throw IoError("cannot open for writing: " + (dir / "manifest.json").string());
        mf << manifest.dump(2) << "\n";
    }

    static KVCache load(const std::filesystem::path& dir) {
        std::ifstream mf(dir / "manifest.json");
        if (!mf) throw IoError("cannot open: " + (dir / "manifest.json").string());
        nlohmann::json manifest;
        try {
            mf >> manifest;
        } catch (const nlohmann::json::exception& e) {
            throw IoError("malformed cache manifest: " + std::string(e.what()));
        }
        if (manifest.value("layout_version", 0u) != kSparseKvLayoutVersion)
            throw IoError("cache layout_version mismatch");

        const auto blob_path = dir / manifest.value("blob", "kv.bin");
        std::ifstream blob(blob_path, std::ios::binary);
        if (!blob) throw IoError("cannot open: " + blob_path.string());
        std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(blob)),
                                       std::istreambuf_iterator<char>());

        KVCache cache;
        for (const auto& entry : manifest.at("entries")) {
            const std::size_t offset = entry.at("offset").get<std::size_t>();
            const std::size_t bytes = entry.at("bytes").get<std::size_t>();
            const std::uint32_t want_crc = entry.at("crc32").get<std::uint32_t>();
            if (offset + bytes > data.size())
                throw IntegrityError("cache record out of blob bounds");
            const auto crc = ::crc32(0L, reinterpret_cast<const Bytef*>(data.data() + offset),
                                     static_cast<uInt>(bytes));
            if (static_cast<std::uint32_t>(crc) != want_crc)
                throw IntegrityError("cache record checksum mismatch");
            CacheKey key{entry.at("timestep").get<int>(), entry.at("block").get<int>()};
            cache.put(key, deserialize_sparse_kv(data.data() + offset, bytes));
        }
        cache.seal();
        return cache;
    }

private:
    std::map<CacheKey, SparseKV> entries_;
    bool sealed_ = false;
};

struct CacheStats {
    std::size_t entry_count = 0;
    std::size_t payload_bytes = 0;  // sum of 2*L*d*4 + 8*L
    std::size_t header_bytes = 0;   // 12 per record
    std::size_t total_bytes = 0;
};

inline CacheStats cache_stats(const KVCache& cache) {
    CacheStats stats;
    stats.entry_count = cache.size();
    for (const auto& [key, kv] : cache.entries()) stats.payload_bytes += kv.payload_bytes();
    stats.header_bytes = stats.entry_count * kSparseKvHeaderBytes;
    stats.total_bytes = stats.payload_bytes + stats.header_bytes;
    return stats;
}

}  // namespace adave
