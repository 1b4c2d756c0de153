// Dense row-major double matrix, rank <= 2. Column vectors are n x 1.
#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace relex {

struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {
        if (r < 0 || c < 0) throw std::runtime_error("Mat: negative shape");
    }

    static Mat zeros(int r, int c) { return Mat(r, c); }

    static Mat colvec(std::initializer_list<double> v) {
        Mat m(static_cast<int>(v.size()), 1);
        int i = 0;
        for (double x : v) m.a[i++] = x;
        return m;
    }

    static Mat colvec(const std::vector<double>& v) {
        Mat m(static_cast<int>(v.size()), 1);
        m.a = v;
        return m;
    }

    double& operator()(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }

    int size() const { return rows * cols; }
    bool empty() const { return size() == 0; }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    std::string shape_str() const {
        return std::to_string(rows) + "x" + std::to_string(cols);
    }
};

inline bool all_finite(const Mat& m) {
    for (double x : m.a)
        if (!std::isfinite(x)) return false;
    return true;
}

// Compensated (Kahan) accumulator: keeps reduction rounding near one ulp,
// which the finite-difference checks rely on.
template <typename S>
struct KahanSumT {
    S sum = S(0);
    S comp = S(0);
    void add(S x) {
        S y = x - comp;
        S t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    S value() const { return sum; }
};

using KahanSum = KahanSumT<double>;

// Numerically stable softmax over a flat range (max subtraction).
template <typename S>
std::vector<S> stable_softmax_t(const std::vector<S>& e) {
    std::vector<S> out(e.size());
    if (e.empty()) return out;
    S m = e[0];
    for (S x : e) m = std::max(m, x);
    KahanSumT<S> z;
    for (size_t i = 0; i < e.size(); ++i) {
        out[i] = std::exp(e[i] - m);
        z.add(out[i]);
    }
    for (S& x : out) x /= z.value();
    return out;
}

inline std::vector<double> stable_softmax(const std::vector<double>& e) {
    return stable_softmax_t<double>(e);
}

} // namespace relex
