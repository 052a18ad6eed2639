#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "untangle/mat.hpp"

namespace untangle {

// DTNS tensor container: magic "DTNS", u32 version=1, u32 dtype
// (1 = float32 little-endian, 2 = int64), u32 rank, rank x u64 dims,
// then the row-major payload. Doubles are narrowed to float32 on write.

void write_dtns(std::ostream& out, const Tensor& t);
void write_dtns(std::ostream& out, const FactorMatrix& m);
Tensor read_dtns_f32(std::istream& in);
FactorMatrix read_dtns_i64(std::istream& in);

void save_dtns(const std::filesystem::path& path, const Tensor& t);
void save_dtns(const std::filesystem::path& path, const FactorMatrix& m);
Tensor load_dtns_f32(const std::filesystem::path& path);
FactorMatrix load_dtns_i64(const std::filesystem::path& path);

// Shortest round-trip decimal representation (std::to_chars); the one float
// format used in CSV/TSV/JSON output so that byte-identical reruns hold.
std::string format_double(double v);

// FNV-1a 64-bit over a byte string, hex-encoded; used for world manifests.
std::string fnv1a_hex(const std::string& bytes);

using json = nlohmann::ordered_json;

json load_json_file(const std::filesystem::path& path);
void save_json_file(const std::filesystem::path& path, const json& j);

// Strict-schema helpers: reject unknown keys, require presence + type.
void require_keys_subset(const json& obj, const std::vector<std::string>& allowed,
                         const std::string& where);
const json& require_key(const json& obj, const std::string& key, const std::string& where);

}  // namespace untangle
