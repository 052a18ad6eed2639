#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "untangle/errors.hpp"

namespace untangle {

// Dense row-major matrix. Tensor (double) is the arithmetic type used by
// every module; FactorMatrix (int64) holds integer factor indices. On disk
// both map to the DTNS container (float32 / int64 payloads).
template <class T>
struct Mat {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<T> data;

    Mat() = default;
    Mat(int64_t r, int64_t c) : rows(r), cols(c), data(static_cast<size_t>(r * c), T(0)) {
        if (r < 0 || c < 0) throw shape_error("negative matrix dimension");
    }
    Mat(int64_t r, int64_t c, std::vector<T> values) : rows(r), cols(c), data(std::move(values)) {
        if (static_cast<size_t>(r * c) != data.size())
            throw shape_error("matrix data length " + std::to_string(data.size()) + " != " +
                              std::to_string(r) + "x" + std::to_string(c));
    }

    static Mat zeros(int64_t r, int64_t c) { return Mat(r, c); }
    static Mat full(int64_t r, int64_t c, T value) {
        Mat m(r, c);
        for (auto& v : m.data) v = value;
        return m;
    }

    T& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols + c)]; }
    const T& at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols + c)]; }

    std::span<T> row(int64_t r) { return {data.data() + r * cols, static_cast<size_t>(cols)}; }
    std::span<const T> row(int64_t r) const {
        return {data.data() + r * cols, static_cast<size_t>(cols)};
    }

    size_t size() const { return data.size(); }
    bool same_shape(const Mat& other) const { return rows == other.rows && cols == other.cols; }

    bool operator==(const Mat& other) const {
        return rows == other.rows && cols == other.cols && data == other.data;
    }
};

using Tensor = Mat<double>;
using FactorMatrix = Mat<int64_t>;

// An observation batch is pixels in [0,1], one image per row.
using ObservationBatch = Tensor;

inline bool all_finite(const Tensor& t) {
    for (double v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b))
        throw shape_error(std::string(where) + ": " + std::to_string(a.rows) + "x" +
                          std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                          std::to_string(b.cols));
}

}  // namespace untangle
