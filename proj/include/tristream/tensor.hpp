#pragma once

// Dense row-major tensor kernels used by every other module.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tristream {

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::string shape_to_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

class Tensor {
  public:
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(count(shape), 0.0);
    }

    Tensor(std::vector<std::size_t> s, std::vector<double> values)
        : shape(std::move(s)), data(std::move(values)) {
        if (count(shape) != data.size())
            throw ShapeError("tensor: " + std::to_string(data.size()) +
                             " values do not fill shape " + shape_to_string(shape));
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (auto d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<std::size_t> s, double v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor vector_of(std::initializer_list<double> values) {
        return Tensor({values.size()}, std::vector<double>(values));
    }

    static Tensor matrix_of(std::initializer_list<std::initializer_list<double>> rows) {
        std::size_t r = rows.size();
        std::size_t c = r ? rows.begin()->size() : 0;
        std::vector<double> d;
        d.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) throw ShapeError("matrix_of: ragged rows");
            d.insert(d.end(), row.begin(), row.end());
        }
        return Tensor({r, c}, std::move(d));
    }

    std::size_t size() const { return data.size(); }
    std::size_t ndim() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    double& at2(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at2(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    // Row i of a 2-d tensor as a fresh vector tensor.
    Tensor row(std::size_t i) const {
        if (ndim() != 2) throw ShapeError("row: tensor is not 2-d, shape " + shape_to_string(shape));
        if (i >= shape[0]) throw ShapeError("row: index " + std::to_string(i) + " out of range");
        std::size_t c = shape[1];
        return Tensor({c}, std::vector<double>(data.begin() + i * c, data.begin() + (i + 1) * c));
    }

    void set_row(std::size_t i, const Tensor& v) {
        std::size_t c = shape[1];
        if (v.size() != c) throw ShapeError("set_row: width mismatch");
        std::copy(v.data.begin(), v.data.end(), data.begin() + i * c);
    }

    Tensor reshaped(std::vector<std::size_t> s) const {
        if (count(s) != size())
            throw ShapeError("reshape: " + shape_to_string(shape) + " to " + shape_to_string(s));
        return Tensor(std::move(s), data);
    }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape) +
                         " vs " + shape_to_string(b.shape));
}

// --- elementwise ---

inline Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor r = a;
    for (std::size_t i = 0; i < r.size(); ++i) r.data[i] += b.data[i];
    return r;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor r = a;
    for (std::size_t i = 0; i < r.size(); ++i) r.data[i] -= b.data[i];
    return r;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor r = a;
    for (std::size_t i = 0; i < r.size(); ++i) r.data[i] *= b.data[i];
    return r;
}

inline Tensor scale(const Tensor& a, double s) {
    Tensor r = a;
    for (double& v : r.data) v *= s;
    return r;
}

inline void axpy(double alpha, const Tensor& x, Tensor& y) {
    require_same_shape(x, y, "axpy");
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += alpha * x.data[i];
}

inline Tensor apply(const Tensor& a, const std::function<double(double)>& f) {
    Tensor r = a;
    for (double& v : r.data) v = f(v);
    return r;
}

// --- activations ---

inline double sigmoid_scalar(double x) {
    if (x >= 0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& a) {
    Tensor r = a;
    for (double& v : r.data) v = sigmoid_scalar(v);
    return r;
}

inline Tensor tanh_t(const Tensor& a) {
    Tensor r = a;
    for (double& v : r.data) v = std::tanh(v);
    return r;
}

inline Tensor relu(const Tensor& a) {
    Tensor r = a;
    for (double& v : r.data) v = v > 0 ? v : 0.0;
    return r;
}

// Numerically stable softmax over a vector.
inline Tensor softmax(const Tensor& a) {
    if (a.size() == 0) throw ShapeError("softmax: empty input");
    double m = *std::max_element(a.data.begin(), a.data.end());
    Tensor r = a;
    double sum = 0.0;
    for (double& v : r.data) {
        v = std::exp(v - m);
        sum += v;
    }
    for (double& v : r.data) v /= sum;
    return r;
}

// --- matmul ---

// a[m x k] * b[k x n]. ikj loop order keeps the inner loop contiguous.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw ShapeError("matmul: need 2-d operands, got " + shape_to_string(a.shape) +
                         " and " + shape_to_string(b.shape));
    if (a.shape[1] != b.shape[0])
        throw ShapeError("matmul: inner dimensions disagree, " + shape_to_string(a.shape) +
                         " vs " + shape_to_string(b.shape));
    std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor c({m, n});
    const double* A = a.data.data();
    const double* B = b.data.data();
    double* C = c.data.data();
    for (std::size_t i = 0; i < m; ++i) {
        double* Ci = C + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            double aip = A[i * k + p];
            if (aip == 0.0) continue;
            const double* Bp = B + p * n;
            for (std::size_t j = 0; j < n; ++j) Ci[j] += aip * Bp[j];
        }
    }
    return c;
}

// W[out x in] * x[in] + optional accumulate helpers for the recurrent code.
inline Tensor matvec(const Tensor& w, const Tensor& x) {
    if (w.ndim() != 2 || x.ndim() != 1)
        throw ShapeError("matvec: need matrix and vector, got " + shape_to_string(w.shape) +
                         " and " + shape_to_string(x.shape));
    if (w.shape[1] != x.shape[0])
        throw ShapeError("matvec: width mismatch, " + shape_to_string(w.shape) + " vs " +
                         shape_to_string(x.shape));
    std::size_t out = w.shape[0], in = w.shape[1];
    Tensor y({out});
    for (std::size_t i = 0; i < out; ++i) {
        const double* wi = w.data.data() + i * in;
        double s = 0.0;
        for (std::size_t j = 0; j < in; ++j) s += wi[j] * x.data[j];
        y.data[i] = s;
    }
    return y;
}

// y = W^T * g, the input-gradient counterpart of matvec.
inline Tensor matvec_transposed(const Tensor& w, const Tensor& g) {
    if (w.shape[0] != g.shape[0])
        throw ShapeError("matvec_transposed: height mismatch");
    std::size_t out = w.shape[0], in = w.shape[1];
    Tensor y({in});
    for (std::size_t i = 0; i < out; ++i) {
        const double* wi = w.data.data() + i * in;
        double gi = g.data[i];
        for (std::size_t j = 0; j < in; ++j) y.data[j] += wi[j] * gi;
    }
    return y;
}

// grad_W += g (outer) x, for W[out x in].
inline void accumulate_outer(Tensor& grad_w, const Tensor& g, const Tensor& x) {
    std::size_t out = grad_w.shape[0], in = grad_w.shape[1];
    if (g.size() != out || x.size() != in)
        throw ShapeError("accumulate_outer: size mismatch");
    for (std::size_t i = 0; i < out; ++i) {
        double gi = g.data[i];
        double* wi = grad_w.data.data() + i * in;
        for (std::size_t j = 0; j < in; ++j) wi[j] += gi * x.data[j];
    }
}

// --- concat / slice ---

inline Tensor concat(const std::vector<Tensor>& tensors, std::size_t axis) {
    if (tensors.empty()) throw ShapeError("concat: no tensors");
    const Tensor& first = tensors.front();
    if (axis >= first.ndim()) throw ShapeError("concat: axis out of range");
    std::vector<std::size_t> out_shape = first.shape;
    std::size_t total = first.shape[axis];
    for (std::size_t t = 1; t < tensors.size(); ++t) {
        const Tensor& cur = tensors[t];
        if (cur.ndim() != first.ndim())
            throw ShapeError("concat: rank mismatch " + shape_to_string(first.shape) + " vs " +
                             shape_to_string(cur.shape));
        for (std::size_t d = 0; d < first.ndim(); ++d)
            if (d != axis && cur.shape[d] != first.shape[d])
                throw ShapeError("concat: shape mismatch off axis, " +
                                 shape_to_string(first.shape) + " vs " + shape_to_string(cur.shape));
        total += cur.shape[axis];
    }
    out_shape[axis] = total;
    Tensor out(out_shape);

    // outer = product of dims before axis, inner = product after.
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= first.shape[d];
    for (std::size_t d = axis + 1; d < first.ndim(); ++d) inner *= first.shape[d];

    std::size_t out_stride = total * inner;
    std::size_t offset = 0;
    for (const Tensor& cur : tensors) {
        std::size_t block = cur.shape[axis] * inner;
        for (std::size_t o = 0; o < outer; ++o)
            std::copy(cur.data.begin() + o * block, cur.data.begin() + (o + 1) * block,
                      out.data.begin() + o * out_stride + offset);
        offset += block;
    }
    return out;
}

inline Tensor slice(const Tensor& t, std::size_t axis, std::size_t start, std::size_t len) {
    if (axis >= t.ndim()) throw ShapeError("slice: axis out of range");
    if (start + len > t.shape[axis])
        throw ShapeError("slice: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") exceeds axis length " +
                         std::to_string(t.shape[axis]));
    std::vector<std::size_t> out_shape = t.shape;
    out_shape[axis] = len;
    Tensor out(out_shape);
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= t.shape[d];
    for (std::size_t d = axis + 1; d < t.ndim(); ++d) inner *= t.shape[d];
    std::size_t in_stride = t.shape[axis] * inner;
    for (std::size_t o = 0; o < outer; ++o)
        std::copy(t.data.begin() + o * in_stride + start * inner,
                  t.data.begin() + o * in_stride + (start + len) * inner,
                  out.data.begin() + o * len * inner);
    return out;
}

inline Tensor concat_vec(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 1 || b.ndim() != 1) throw ShapeError("concat_vec: need vectors");
    Tensor out({a.size() + b.size()});
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.size());
    return out;
}

inline double dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

}  // namespace tristream
