#include "fggsl/autodiff.hpp"

#include "fggsl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fggsl::ad {

std::string shape_str(const Matrix& m) {
    std::ostringstream os;
    os << m.rows() << "x" << m.cols();
    return os.str();
}

// ---- ParameterSet ------------------------------------------------------------

void ParameterSet::add(const std::string& name, Matrix init) {
    if (index_.count(name)) throw ContractError("duplicate parameter '" + name + "'");
    index_[name] = entries_.size();
    names_.push_back(name);
    Matrix grad = Matrix::Zero(init.rows(), init.cols());
    entries_.push_back({std::move(init), std::move(grad)});
}

bool ParameterSet::contains(const std::string& name) const { return index_.count(name) > 0; }

std::size_t ParameterSet::slot(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
}

Matrix& ParameterSet::value(const std::string& name) { return entries_[slot(name)].value; }
const Matrix& ParameterSet::value(const std::string& name) const { return entries_[slot(name)].value; }
Matrix& ParameterSet::grad(const std::string& name) { return entries_[slot(name)].grad; }
const Matrix& ParameterSet::grad(const std::string& name) const { return entries_[slot(name)].grad; }

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
    return n;
}

void ParameterSet::zero_grad() {
    for (auto& e : entries_) e.grad.setZero(e.value.rows(), e.value.cols());
}

// ---- Tensor / Tape -------------------------------------------------------------

const Matrix& Tensor::value() const {
    if (!tape_) throw ContractError("use of an empty tensor handle");
    if (generation_ != tape_->generation()) throw ContractError("tensor handle outlived its tape");
    return tape_->value(id_);
}

bool Tensor::grad_tracked() const {
    value();
    return tape_->tracked(id_);
}

double Tensor::scalar() const {
    const Matrix& v = value();
    if (v.rows() != 1 || v.cols() != 1) throw ContractError("scalar() on a " + shape_str(v) + " tensor");
    return v(0, 0);
}

Tensor Tape::constant(Matrix value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Tensor(this, static_cast<int>(nodes_.size() - 1), generation_);
}

Tensor Tape::parameter(ParameterSet& params, const std::string& name) {
    Node n;
    n.value = params.value(name);
    n.tracked = true;
    n.param_name = name;
    nodes_.push_back(std::move(n));
    return Tensor(this, static_cast<int>(nodes_.size() - 1), generation_);
}

Tensor Tape::record(Matrix value, std::vector<int> inputs, Vjp vjp) {
    Node n;
    n.value = std::move(value);
    for (int id : inputs) {
        if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
            throw ContractError("operation input is not on this tape");
        n.tracked = n.tracked || nodes_[id].tracked;
    }
    n.inputs = std::move(inputs);
    if (n.tracked) n.vjp = std::move(vjp);
    nodes_.push_back(std::move(n));
    return Tensor(this, static_cast<int>(nodes_.size() - 1), generation_);
}

const Matrix& Tape::value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
bool Tape::tracked(int id) const { return nodes_.at(static_cast<std::size_t>(id)).tracked; }

void Tape::clear() {
    nodes_.clear();
    ++generation_;
}

void Tape::backward(const Tensor& loss, ParameterSet& params) {
    if (loss.tape() != this) throw ContractError("backward: loss is not on this tape");
    const Matrix& lv = loss.value();
    if (lv.rows() != 1 || lv.cols() != 1)
        throw ContractError("backward: loss must be a scalar, got " + shape_str(lv));

    std::vector<Matrix> grads(nodes_.size());
    std::vector<char> has(nodes_.size(), 0);
    grads[loss.id()] = Matrix::Ones(1, 1);
    has[loss.id()] = 1;

    for (int i = loss.id(); i >= 0; --i) {
        if (!has[i]) continue;
        Node& node = nodes_[i];
        if (!node.tracked) continue;
        if (!node.param_name.empty()) {
            Matrix& g = params.grad(node.param_name);
            if (g.rows() != grads[i].rows() || g.cols() != grads[i].cols())
                throw DimensionError("gradient " + shape_str(grads[i]) + " does not match parameter '" +
                                     node.param_name + "' " + shape_str(g));
            g += grads[i];
            continue;
        }
        std::vector<Matrix*> slots(node.inputs.size(), nullptr);
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
            const int in = node.inputs[k];
            if (!nodes_[in].tracked) continue;
            if (!has[in]) {
                grads[in] = Matrix::Zero(nodes_[in].value.rows(), nodes_[in].value.cols());
                has[in] = 1;
            }
            slots[k] = &grads[in];
        }
        GradSink sink(std::move(slots));
        node.vjp(*this, node.value, grads[i], sink);
        grads[i] = Matrix();  // release intermediate storage early
    }
    clear();
}

// ---- helpers ----------------------------------------------------------------------

namespace {

Tape& same_tape(const Tensor& a, const Tensor& b) {
    if (!a.tape() || a.tape() != b.tape()) throw ContractError("operands live on different tapes");
    return *a.tape();
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace

// ---- operations --------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    Tape& tape = same_tape(a, b);
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (av.cols() != bv.rows())
        throw DimensionError("matmul: " + shape_str(av) + " times " + shape_str(bv));
    Matrix out = av * bv;
    const int ia = a.id(), ib = b.id();
    return tape.record(std::move(out), {ia, ib},
                       [ia, ib](const Tape& t, const Matrix&, const Matrix& g, GradSink& s) {
                           if (s.wants(0)) s[0].noalias() += g * t.value(ib).transpose();
                           if (s.wants(1)) s[1].noalias() += t.value(ia).transpose() * g;
                       });
}

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
    switch (op) {
        case BinaryOp::add: return add(a, b);
        case BinaryOp::sub: return sub(a, b);
        case BinaryOp::hadamard: return hadamard(a, b);
    }
    throw ContractError("unknown elementwise op");
}

Tensor add(const Tensor& a, const Tensor& b) {
    Tape& tape = same_tape(a, b);
    require_same_shape("add", a.value(), b.value());
    Matrix out = a.value() + b.value();
    return tape.record(std::move(out), {a.id(), b.id()},
                       [](const Tape&, const Matrix&, const Matrix& g, GradSink& s) {
                           if (s.wants(0)) s[0] += g;
                           if (s.wants(1)) s[1] += g;
                       });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    Tape& tape = same_tape(a, b);
    require_same_shape("sub", a.value(), b.value());
    Matrix out = a.value() - b.value();
    return tape.record(std::move(out), {a.id(), b.id()},
                       [](const Tape&, const Matrix&, const Matrix& g, GradSink& s) {
                           if (s.wants(0)) s[0] += g;
                           if (s.wants(1)) s[1] -= g;
                       });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    Tape& tape = same_tape(a, b);
    require_same_shape("hadamard", a.value(), b.value());
    Matrix out = a.value().cwiseProduct(b.value());
    const int ia = a.id(), ib = b.id();
    return tape.record(std::move(out), {ia, ib},
                       [ia, ib](const Tape& t, const Matrix&, const Matrix& g, GradSink& s) {
                           if (s.wants(0)) s[0] += g.cwiseProduct(t.value(ib));
                           if (s.wants(1)) s[1] += g.cwiseProduct(t.value(ia));
                       });
}

Tensor scale(const Tensor& a, double c) {
    Tape& tape = *a.tape();
    Matrix out = c * a.value();
    return tape.record(std::move(out), {a.id()},
                       [c](const Tape&, const Matrix&, const Matrix& g, GradSink& s) {
                           if (s.wants(0)) s[0] += c * g;
                       });
}

Tensor activation(Activation op, const Tensor& a, double eps) {
    switch (op) {
        case Activation::sigmoid: return sigmoid(a);
        case Activation::tanh: return tanh(a);
        case Activation::rsqrt_clamped: return rsqrt_clamped(a, eps);
    }
    throw ContractError("unknown activation");
}

Tensor sigmoid(const Tensor& a) {
    Matrix out = a.value().unaryExpr([](double x) {
        // Split by sign so exp never overflows.
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
    });
    return a.tape()->record(std::move(out), {a.id()},
                            [](const Tape&, const Matrix& y, const Matrix& g, GradSink& s) {
                                if (s.wants(0))
                                    s[0].array() += g.array() * y.array() * (1.0 - y.array());
                            });
}

Tensor tanh(const Tensor& a) {
    Matrix out = a.value().array().tanh().matrix();
    return a.tape()->record(std::move(out), {a.id()},
                            [](const Tape&, const Matrix& y, const Matrix& g, GradSink& s) {
                                if (s.wants(0)) s[0].array() += g.array() * (1.0 - y.array().square());
                            });
}

Tensor rsqrt_clamped(const Tensor& a, double eps) {
    const int ia = a.id();
    Matrix out = a.value().unaryExpr([eps](double x) { return 1.0 / std::sqrt(std::max(x, eps)); });
    return a.tape()->record(std::move(out), {ia},
                            [ia, eps](const Tape& t, const Matrix& y, const Matrix& g, GradSink& s) {
                                if (!s.wants(0)) return;
                                const Matrix& x = t.value(ia);
                                for (Index k = 0; k < x.size(); ++k) {
                                    if (x.data()[k] > eps) {
                                        const double r = y.data()[k];
                                        s[0].data()[k] += -0.5 * r * r * r * g.data()[k];
                                    }
                                }
                            });
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw ContractError("concat_cols: no parts");
    Tape& tape = *parts[0].tape();
    const Index rows = parts[0].rows();
    Index cols = 0;
    std::vector<int> ids;
    std::vector<Index> widths;
    for (const Tensor& p : parts) {
        if (p.tape() != &tape) throw ContractError("operands live on different tapes");
        if (p.rows() != rows)
            throw DimensionError("concat_cols: row mismatch " + shape_str(parts[0].value()) + " vs " +
                                 shape_str(p.value()));
        ids.push_back(p.id());
        widths.push_back(p.cols());
        cols += p.cols();
    }
    Matrix out(rows, cols);
    Index c = 0;
    for (const Tensor& p : parts) {
        out.middleCols(c, p.cols()) = p.value();
        c += p.cols();
    }
    return tape.record(std::move(out), std::move(ids),
                       [widths](const Tape&, const Matrix&, const Matrix& g, GradSink& s) {
                           Index off = 0;
                           for (std::size_t k = 0; k < widths.size(); ++k) {
                               if (s.wants(k)) s[k] += g.middleCols(off, widths[k]);
                               off += widths[k];
                           }
                       });
}

Tensor transpose(const Tensor& a) {
    Matrix out = a.value().transpose();
    return a.tape()->record(std::move(out), {a.id()},
                            [](const Tape&, const Matrix&, const Matrix& g, GradSink& s) {
                                if (s.wants(0)) s[0] += g.transpose();
                            });
}

Tensor gram(const Tensor& a) {
    const Matrix& av = a.value();
    Matrix out = av * av.transpose();
    for (Index i = 0; i < out.rows(); ++i)
        for (Index j = 0; j < i; ++j) out(i, j) = out(j, i);
    const int ia = a.id();
    return a.tape()->record(std::move(out), {ia},
                            [ia](const Tape& t, const Matrix&, const Matrix& g, GradSink& s) {
                                if (!s.wants(0)) return;
                                Matrix gs = g + g.transpose();
                                s[0].noalias() += gs * t.value(ia);
                            });
}

Tensor row_sums(const Tensor& a) {
    Matrix out = a.value().rowwise().sum();
    return a.tape()->record(std::move(out), {a.id()},
                            [](const Tape&, const Matrix&, const Matrix& g, GradSink& s) {
                                if (s.wants(0)) s[0].colwise() += g.col(0);
                            });
}

Tensor scale_rows(const Tensor& a, const Tensor& v) {
    Tape& tape = same_tape(a, v);
    const Matrix& av = a.value();
    const Matrix& vv = v.value();
    if (vv.cols() != 1 || vv.rows() != av.rows())
        throw DimensionError("scale_rows: " + shape_str(av) + " by " + shape_str(vv));
    Matrix out = vv.col(0).asDiagonal() * av;
    const int ia = a.id(), iv = v.id();
    return tape.record(std::move(out), {ia, iv},
                       [ia, iv](const Tape& t, const Matrix&, const Matrix& g, GradSink& s) {
                           if (s.wants(0)) s[0] += t.value(iv).col(0).asDiagonal() * g;
                           if (s.wants(1)) s[1] += g.cwiseProduct(t.value(ia)).rowwise().sum();
                       });
}

Tensor scale_cols(const Tensor& a, const Tensor& v) {
    Tape& tape = same_tape(a, v);
    const Matrix& av = a.value();
    const Matrix& vv = v.value();
    if (vv.cols() != 1 || vv.rows() != av.cols())
        throw DimensionError("scale_cols: " + shape_str(av) + " by " + shape_str(vv));
    Matrix out = av * vv.col(0).asDiagonal();
    const int ia = a.id(), iv = v.id();
    return tape.record(std::move(out), {ia, iv},
                       [ia, iv](const Tape& t, const Matrix&, const Matrix& g, GradSink& s) {
                           if (s.wants(0)) s[0] += g * t.value(iv).col(0).asDiagonal();
                           if (s.wants(1))
                               s[1] += g.cwiseProduct(t.value(ia)).colwise().sum().transpose();
                       });
}

Tensor add_row_vector(const Tensor& a, const Tensor& bias) {
    Tape& tape = same_tape(a, bias);
    const Matrix& av = a.value();
    const Matrix& bv = bias.value();
    if (bv.rows() != 1 || bv.cols() != av.cols())
        throw DimensionError("add_row_vector: " + shape_str(av) + " plus " + shape_str(bv));
    Matrix out = av.rowwise() + bv.row(0);
    return tape.record(std::move(out), {a.id(), bias.id()},
                       [](const Tape&, const Matrix&, const Matrix& g, GradSink& s) {
                           if (s.wants(0)) s[0] += g;
                           if (s.wants(1)) s[1] += g.colwise().sum();
                       });
}

Tensor slice_rows(const Tensor& a, Index begin, Index count) {
    const Matrix& av = a.value();
    if (begin < 0 || count < 0 || begin + count > av.rows())
        throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                             std::to_string(begin + count) + ") of " + shape_str(av));
    Matrix out = av.middleRows(begin, count);
    return a.tape()->record(std::move(out), {a.id()},
                            [begin, count](const Tape&, const Matrix&, const Matrix& g, GradSink& s) {
                                if (s.wants(0)) s[0].middleRows(begin, count) += g;
                            });
}

Tensor sum(const Tensor& a) {
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    return a.tape()->record(std::move(out), {a.id()},
                            [](const Tape&, const Matrix&, const Matrix& g, GradSink& s) {
                                if (s.wants(0)) s[0].array() += g(0, 0);
                            });
}

Tensor replace_rows(const Tensor& a, std::span<const int> rows, const Matrix& source) {
    const Matrix& av = a.value();
    require_same_shape("replace_rows", av, source);
    Matrix out = av;
    std::vector<int> rs(rows.begin(), rows.end());
    for (int r : rs) {
        if (r < 0 || r >= av.rows()) throw ContractError("replace_rows: row " + std::to_string(r) + " out of range");
        out.row(r) = source.row(r);
    }
    return a.tape()->record(std::move(out), {a.id()},
                            [rs](const Tape&, const Matrix&, const Matrix& g, GradSink& s) {
                                if (!s.wants(0)) return;
                                Matrix gg = g;
                                for (int r : rs) gg.row(r).setZero();
                                s[0] += gg;
                            });
}

Tensor gather(const Tensor& a, std::span<const IndexPair> pairs) {
    const Matrix& av = a.value();
    std::vector<IndexPair> ps(pairs.begin(), pairs.end());
    Matrix out(static_cast<Index>(ps.size()), 1);
    for (std::size_t k = 0; k < ps.size(); ++k) {
        const auto [i, j] = ps[k];
        if (i < 0 || j < 0 || i >= av.rows() || j >= av.cols())
            throw DimensionError("gather: entry (" + std::to_string(i) + "," + std::to_string(j) +
                                 ") outside " + shape_str(av));
        out(static_cast<Index>(k), 0) = av(i, j);
    }
    return a.tape()->record(std::move(out), {a.id()},
                            [ps](const Tape&, const Matrix&, const Matrix& g, GradSink& s) {
                                if (!s.wants(0)) return;
                                for (std::size_t k = 0; k < ps.size(); ++k)
                                    s[0](ps[k].first, ps[k].second) += g(static_cast<Index>(k), 0);
                            });
}

Tensor cosine_rows(const Tensor& a, const Tensor& b, std::span<const IndexPair> pairs) {
    Tape& tape = same_tape(a, b);
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (av.cols() != bv.cols()) throw DimensionError("cosine_rows: " + shape_str(av) + " vs " + shape_str(bv));

    std::vector<IndexPair> ps(pairs.begin(), pairs.end());
    for (const auto& [i, j] : ps)
        if (i < 0 || i >= av.rows() || j < 0 || j >= bv.rows())
            throw DimensionError("cosine_rows: pair (" + std::to_string(i) + "," + std::to_string(j) + ") out of range");
    // Norms are only required for rows that appear in a pair.
    Eigen::VectorXd na = Eigen::VectorXd::Zero(av.rows());
    Eigen::VectorXd nb = Eigen::VectorXd::Zero(bv.rows());
    {
        std::vector<char> ua(av.rows(), 0), ub(bv.rows(), 0);
        for (const auto& [i, j] : ps) ua[i] = ub[j] = 1;
        for (Index r = 0; r < av.rows(); ++r)
            if (ua[r]) {
                na(r) = av.row(r).norm();
                if (!(na(r) > 0.0)) throw ContractError("cosine_rows: zero-norm row " + std::to_string(r));
            }
        for (Index r = 0; r < bv.rows(); ++r)
            if (ub[r]) {
                nb(r) = bv.row(r).norm();
                if (!(nb(r) > 0.0)) throw ContractError("cosine_rows: zero-norm row " + std::to_string(r));
            }
    }

    Matrix out(static_cast<Index>(ps.size()), 1);
    for (std::size_t k = 0; k < ps.size(); ++k) {
        const auto [i, j] = ps[k];
        out(static_cast<Index>(k), 0) = av.row(i).dot(bv.row(j)) / (na(i) * nb(j));
    }
    const int ia = a.id(), ib = b.id();
    return tape.record(
        std::move(out), {ia, ib},
        [ia, ib, ps, na, nb](const Tape& t, const Matrix& c, const Matrix& g, GradSink& s) {
            const Matrix& A = t.value(ia);
            const Matrix& B = t.value(ib);
            for (std::size_t k = 0; k < ps.size(); ++k) {
                const auto [i, j] = ps[k];
                const double gk = g(static_cast<Index>(k), 0);
                if (gk == 0.0) continue;
                const double ck = c(static_cast<Index>(k), 0);
                const double inv = 1.0 / (na(i) * nb(j));
                if (s.wants(0))
                    s[0].row(i) += gk * (B.row(j) * inv - A.row(i) * (ck / (na(i) * na(i))));
                if (s.wants(1))
                    s[1].row(j) += gk * (A.row(i) * inv - B.row(j) * (ck / (nb(j) * nb(j))));
            }
        });
}

namespace {

Matrix stable_softmax(const Matrix& x) {
    Matrix p(x.rows(), x.cols());
    for (Index r = 0; r < x.rows(); ++r) {
        const double m = x.row(r).maxCoeff();
        p.row(r) = (x.row(r).array() - m).exp().matrix();
        p.row(r) /= p.row(r).sum();
    }
    return p;
}

}  // namespace

Tensor softmax(const Tensor& logits) {
    Matrix out = stable_softmax(logits.value());
    return logits.tape()->record(std::move(out), {logits.id()},
                                 [](const Tape&, const Matrix& p, const Matrix& g, GradSink& s) {
                                     if (!s.wants(0)) return;
                                     Eigen::VectorXd inner = g.cwiseProduct(p).rowwise().sum();
                                     Matrix centered = g.colwise() - inner;
                                     s[0] += p.cwiseProduct(centered);
                                 });
}

CrossEntropy softmax_cross_entropy(const Tensor& logits, const Matrix& onehot, std::span<const int> rows) {
    const Matrix& x = logits.value();
    require_same_shape("softmax_cross_entropy", x, onehot);
    if (rows.empty()) throw ContractError("softmax_cross_entropy: empty row set");
    std::vector<int> rs(rows.begin(), rows.end());
    double total = 0.0;
    for (int r : rs) {
        if (r < 0 || r >= x.rows()) throw ContractError("softmax_cross_entropy: row " + std::to_string(r) + " out of range");
        if (std::abs(onehot.row(r).sum() - 1.0) > 1e-12)
            throw ContractError("softmax_cross_entropy: target row " + std::to_string(r) + " does not sum to 1");
        const double m = x.row(r).maxCoeff();
        const double lse = m + std::log((x.row(r).array() - m).exp().sum());
        // -sum_c y_c (x_c - lse)
        total += -(onehot.row(r).dot(x.row(r)) - lse * onehot.row(r).sum());
    }
    const double n = static_cast<double>(rs.size());
    Matrix loss(1, 1);
    loss(0, 0) = total / n;

    Tape& tape = *logits.tape();
    const int il = logits.id();
    Matrix targets = onehot;
    Tensor loss_t = tape.record(
        std::move(loss), {il},
        [il, rs, n, targets = std::move(targets)](const Tape& t, const Matrix&, const Matrix& g, GradSink& s) {
            if (!s.wants(0)) return;
            const Matrix p = stable_softmax(t.value(il));
            const double w = g(0, 0) / n;
            for (int r : rs) s[0].row(r) += w * (p.row(r) - targets.row(r));
        });
    Tensor probs = softmax(logits);
    return {loss_t, probs};
}

// ---- grad_check -------------------------------------------------------------------------

GradCheckReport grad_check(const LossBuilder& loss_fn, ParameterSet& params, double step) {
    params.zero_grad();
    {
        Tape tape;
        Tensor loss = loss_fn(tape, params);
        tape.backward(loss, params);
    }
    auto evaluate = [&]() {
        Tape tape;
        return loss_fn(tape, params).scalar();
    };

    GradCheckReport report;
    for (const std::string& name : params.names()) {
        Matrix analytic = params.grad(name);
        Matrix& value = params.value(name);
        for (Index k = 0; k < value.size(); ++k) {
            const double saved = value.data()[k];
            value.data()[k] = saved + step;
            const double fp = evaluate();
            value.data()[k] = saved - step;
            const double fm = evaluate();
            value.data()[k] = saved;
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic.data()[k];
            const double abs_err = std::abs(a - numeric);
            const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
            report.max_abs_error = std::max(report.max_abs_error, abs_err);
            if (report.worst_index < 0 || rel > report.max_relative_error) {
                report.max_relative_error = rel;
                report.worst_parameter = name;
                report.worst_index = k;
            }
            ++report.entries_checked;
        }
    }
    return report;
}

}  // namespace fggsl::ad
