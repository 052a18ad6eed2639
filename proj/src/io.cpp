#include "untangle/io.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <vector>

#include "untangle/errors.hpp"

namespace untangle {

namespace {

constexpr uint32_t kDtnsVersion = 1;
constexpr uint32_t kDtypeF32 = 1;
constexpr uint32_t kDtypeI64 = 2;

void put_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
    put_u32(out, static_cast<uint32_t>(v));
    put_u32(out, static_cast<uint32_t>(v >> 32));
}

uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw io_error("truncated DTNS stream");
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

uint64_t get_u64(std::istream& in) {
    uint64_t lo = get_u32(in);
    uint64_t hi = get_u32(in);
    return (hi << 32) | lo;
}

void write_header(std::ostream& out, uint32_t dtype, uint64_t rows, uint64_t cols) {
    out.write("DTNS", 4);
    put_u32(out, kDtnsVersion);
    put_u32(out, dtype);
    put_u32(out, 2);  // rank
    put_u64(out, rows);
    put_u64(out, cols);
}

std::pair<uint64_t, uint64_t> read_header(std::istream& in, uint32_t want_dtype) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "DTNS", 4) != 0) throw io_error("bad DTNS magic");
    uint32_t version = get_u32(in);
    if (version != kDtnsVersion)
        throw io_error("unsupported DTNS version " + std::to_string(version));
    uint32_t dtype = get_u32(in);
    if (dtype != want_dtype)
        throw io_error("DTNS dtype " + std::to_string(dtype) + ", expected " +
                       std::to_string(want_dtype));
    uint32_t rank = get_u32(in);
    if (rank != 2) throw io_error("DTNS rank " + std::to_string(rank) + ", expected 2");
    uint64_t rows = get_u64(in);
    uint64_t cols = get_u64(in);
    return {rows, cols};
}

}  // namespace

void write_dtns(std::ostream& out, const Tensor& t) {
    write_header(out, kDtypeF32, static_cast<uint64_t>(t.rows), static_cast<uint64_t>(t.cols));
    std::vector<float> buf(t.data.size());
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(t.data[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

void write_dtns(std::ostream& out, const FactorMatrix& m) {
    write_header(out, kDtypeI64, static_cast<uint64_t>(m.rows), static_cast<uint64_t>(m.cols));
    out.write(reinterpret_cast<const char*>(m.data.data()),
              static_cast<std::streamsize>(m.data.size() * sizeof(int64_t)));
}

Tensor read_dtns_f32(std::istream& in) {
    auto [rows, cols] = read_header(in, kDtypeF32);
    std::vector<float> buf(rows * cols);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw io_error("truncated DTNS float payload");
    Tensor t(static_cast<int64_t>(rows), static_cast<int64_t>(cols));
    for (size_t i = 0; i < buf.size(); ++i) t.data[i] = static_cast<double>(buf[i]);
    return t;
}

FactorMatrix read_dtns_i64(std::istream& in) {
    auto [rows, cols] = read_header(in, kDtypeI64);
    FactorMatrix m(static_cast<int64_t>(rows), static_cast<int64_t>(cols));
    in.read(reinterpret_cast<char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(int64_t)));
    if (!in) throw io_error("truncated DTNS int payload");
    return m;
}

void save_dtns(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open " + path.string() + " for writing");
    write_dtns(out, t);
    if (!out) throw io_error("write failed: " + path.string());
}

void save_dtns(const std::filesystem::path& path, const FactorMatrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open " + path.string() + " for writing");
    write_dtns(out, m);
    if (!out) throw io_error("write failed: " + path.string());
}

Tensor load_dtns_f32(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path.string());
    return read_dtns_f32(in);
}

FactorMatrix load_dtns_i64(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path.string());
    return read_dtns_i64(in);
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string fnv1a_hex(const std::string& bytes) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    static const char* digits = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = digits[h & 0xf];
        h >>= 4;
    }
    buf[16] = 0;
    return std::string(buf, 16);
}

json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw schema_error("invalid JSON in " + path.string() + ": " + e.what());
    }
}

void save_json_file(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open " + path.string() + " for writing");
    out << j.dump(2) << "\n";
    if (!out) throw io_error("write failed: " + path.string());
}

void require_keys_subset(const json& obj, const std::vector<std::string>& allowed,
                         const std::string& where) {
    if (!obj.is_object()) throw schema_error(where + ": expected a JSON object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const auto& k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) throw schema_error(where + ": unknown key '" + it.key() + "'");
    }
}

const json& require_key(const json& obj, const std::string& key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw schema_error(where + ": missing key '" + key + "'");
    return *it;
}

}  // namespace untangle
