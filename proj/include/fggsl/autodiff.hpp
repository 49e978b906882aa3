#pragma once

// Define-by-run reverse-mode differentiation over dense 2-D matrices.
//
// A Tape is rebuilt every forward pass. Tensors are lightweight handles into
// the tape; operations are free functions that append one node each and record
// a vector-Jacobian rule. Learnable matrices live in a ParameterSet, outside the
// tape, and receive accumulated gradients from Tape::backward.

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace fggsl::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

std::string shape_str(const Matrix& m);

/// Named learnable matrices with gradient accumulators of identical shape.
/// Iteration order is insertion order, which keeps checkpoints and optimizer
/// state deterministic.
class ParameterSet {
public:
    void add(const std::string& name, Matrix init);
    bool contains(const std::string& name) const;

    Matrix& value(const std::string& name);
    const Matrix& value(const std::string& name) const;
    Matrix& grad(const std::string& name);
    const Matrix& grad(const std::string& name) const;

    const std::vector<std::string>& names() const { return names_; }
    std::size_t size() const { return names_.size(); }
    std::size_t scalar_count() const;

    void zero_grad();

private:
    struct Entry {
        Matrix value;
        Matrix grad;
    };
    std::size_t slot(const std::string& name) const;

    std::vector<std::string> names_;
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

class Tape;

/// Handle to a node on a tape. Invalidated when the tape is cleared.
class Tensor {
public:
    Tensor() = default;

    const Matrix& value() const;
    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
    bool grad_tracked() const;
    int id() const { return id_; }
    Tape* tape() const { return tape_; }
    double scalar() const;

private:
    friend class Tape;
    Tensor(Tape* tape, int id, std::uint64_t generation)
        : tape_(tape), id_(id), generation_(generation) {}

    Tape* tape_ = nullptr;
    int id_ = -1;
    std::uint64_t generation_ = 0;
};

/// Per-input gradient buffers handed to a vector-Jacobian rule. A slot is null
/// when the corresponding input does not need a gradient.
class GradSink {
public:
    explicit GradSink(std::vector<Matrix*> slots) : slots_(std::move(slots)) {}
    bool wants(std::size_t k) const { return slots_[k] != nullptr; }
    Matrix& operator[](std::size_t k) { return *slots_[k]; }

private:
    std::vector<Matrix*> slots_;
};

class Tape {
public:
    /// Rule: (tape, node output, upstream gradient, sinks per input). Rules must
    /// accumulate (+=) into the sinks; the same input may appear twice.
    using Vjp = std::function<void(const Tape&, const Matrix&, const Matrix&, GradSink&)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Tensor constant(Matrix value);
    Tensor parameter(ParameterSet& params, const std::string& name);

    /// Appends an operation node. Inputs must already be on this tape.
    Tensor record(Matrix value, std::vector<int> inputs, Vjp vjp);

    const Matrix& value(int id) const;
    bool tracked(int id) const;
    std::size_t size() const { return nodes_.size(); }
    std::uint64_t generation() const { return generation_; }

    /// Accumulates d(loss)/d(param) into params for every parameter leaf, visiting
    /// each node once in reverse recording order, then clears the tape.
    void backward(const Tensor& loss, ParameterSet& params);

    void clear();

private:
    struct Node {
        Matrix value;
        std::vector<int> inputs;
        bool tracked = false;
        Vjp vjp;
        std::string param_name;  // non-empty for parameter leaves
    };

    std::deque<Node> nodes_;  // stable references across appends
    std::uint64_t generation_ = 1;
};

// ---- operations --------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

enum class BinaryOp { add, sub, hadamard };
Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

enum class Activation { sigmoid, tanh, rsqrt_clamped };
Tensor activation(Activation op, const Tensor& a, double eps = 1e-8);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
/// 1/sqrt(max(x, eps)); zero gradient where the clamp is active.
Tensor rsqrt_clamped(const Tensor& a, double eps);

Tensor concat_cols(std::span<const Tensor> parts);
Tensor transpose(const Tensor& a);
/// a * a^T, with the lower triangle mirrored from the upper one so the result
/// is symmetric bit for bit.
Tensor gram(const Tensor& a);
Tensor row_sums(const Tensor& a);
/// out(i,j) = v(i) * a(i,j); v is rows x 1.
Tensor scale_rows(const Tensor& a, const Tensor& v);
/// out(i,j) = a(i,j) * v(j); v is cols x 1.
Tensor scale_cols(const Tensor& a, const Tensor& v);
/// Adds a 1 x cols row vector to every row.
Tensor add_row_vector(const Tensor& a, const Tensor& bias);
Tensor slice_rows(const Tensor& a, Index begin, Index count);
Tensor sum(const Tensor& a);
/// Replaces the listed rows with the same rows of a constant matrix.
Tensor replace_rows(const Tensor& a, std::span<const int> rows, const Matrix& source);

using IndexPair = std::pair<int, int>;

/// Column vector of a(i, j) for each pair.
Tensor gather(const Tensor& a, std::span<const IndexPair> pairs);
/// Column vector of cos(a_i, b_j) for each pair (i, j).
Tensor cosine_rows(const Tensor& a, const Tensor& b, std::span<const IndexPair> pairs);

Tensor softmax(const Tensor& logits);

struct CrossEntropy {
    Tensor loss;   // 1 x 1, mean over the selected rows
    Tensor probs;  // N x C, every row
};
/// Fused log-softmax cross-entropy over `rows`, plus the full probability matrix.
CrossEntropy softmax_cross_entropy(const Tensor& logits, const Matrix& onehot,
                                   std::span<const int> rows);

// ---- verification -------------------------------------------------------------

using LossBuilder = std::function<Tensor(Tape&, ParameterSet&)>;

struct GradCheckReport {
    double max_relative_error = 0.0;
    double max_abs_error = 0.0;
    std::string worst_parameter;
    Index worst_index = -1;
    std::size_t entries_checked = 0;
};

/// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps entries whose
/// true gradient is ~0 from turning finite-difference noise into huge ratios.
inline constexpr double kGradCheckFloor = 1e-6;

GradCheckReport grad_check(const LossBuilder& loss_fn, ParameterSet& params, double step = 1e-5);

}  // namespace fggsl::ad
