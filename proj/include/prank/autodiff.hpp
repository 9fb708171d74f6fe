#ifndef PRANK_AUTODIFF_HPP
#define PRANK_AUTODIFF_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "prank/errors.hpp"
#include "prank/linalg.hpp"

namespace prank::ad {

// Reverse-mode differentiation over dense matrices. Every op appends a node
// holding its value and a closure that pushes the node's gradient to its
// inputs; backward() replays the closures in reverse insertion order, which
// is a valid topological order since nodes only reference earlier nodes.
class Tape;

struct Var {
    int id = -1;
};

class Tape {
public:
    // Degenerate-norm threshold of normalize_rows.
    static constexpr double kMinNorm = 1e-12;

    Var constant(Matrix value) { return push(std::move(value), {}, false); }

    // Leaf whose gradient is kept after backward(). `tag` is returned by
    // leaves() so callers can map gradients back to their storage.
    Var leaf(Matrix value, int tag) {
        Var v = push(std::move(value), {}, true);
        leaves_.push_back({v.id, tag});
        return v;
    }

    const Matrix& value(Var v) const { return nodes_[v.id].value; }
    double scalar(Var v) const { return nodes_[v.id].value(0, 0); }

    // Gradient after backward(); a zero matrix if the node did not influence the root.
    Matrix grad(Var v) const {
        const auto& n = nodes_[v.id];
        if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }

    struct LeafRef {
        int node;
        int tag;
    };
    const std::vector<LeafRef>& leaves() const { return leaves_; }

    void backward(Var root) {
        const auto& r = nodes_[root.id].value;
        if (r.rows() != 1 || r.cols() != 1)
            throw UsageError("backward() needs a scalar root, got " + std::to_string(r.rows()) + "x" +
                             std::to_string(r.cols()));
        for (auto& n : nodes_) n.grad.resize(0, 0);
        nodes_[root.id].grad = Matrix::Ones(1, 1);
        for (int i = root.id; i >= 0; --i) {
            auto& n = nodes_[i];
            if (n.grad.size() == 0 || !n.backward) continue;
            n.backward(*this, n.grad);
        }
    }

    // ---- ops -------------------------------------------------------------

    Var matmul(Var a, Var b) {
        Matrix out = value(a) * value(b);
        return push(std::move(out), [a, b](Tape& t, const Matrix& g) {
            if (t.needs(a)) t.accumulate(a, g * t.value(b).transpose());
            if (t.needs(b)) t.accumulate(b, t.value(a).transpose() * g);
        });
    }

    // a * b^T
    Var matmul_nt(Var a, Var b) {
        Matrix out = value(a) * value(b).transpose();
        return push(std::move(out), [a, b](Tape& t, const Matrix& g) {
            if (t.needs(a)) t.accumulate(a, g * t.value(b));
            if (t.needs(b)) t.accumulate(b, g.transpose() * t.value(a));
        });
    }

    // x (r x c) + bias (1 x c) broadcast over rows.
    Var add_bias(Var x, Var bias) {
        Matrix out = value(x);
        out.rowwise() += value(bias).row(0);
        return push(std::move(out), [x, bias](Tape& t, const Matrix& g) {
            if (t.needs(x)) t.accumulate(x, g);
            if (t.needs(bias)) t.accumulate(bias, g.colwise().sum());
        });
    }

    Var add(Var a, Var b) {
        check_same(a, b, "add");
        Matrix out = value(a) + value(b);
        return push(std::move(out), [a, b](Tape& t, const Matrix& g) {
            if (t.needs(a)) t.accumulate(a, g);
            if (t.needs(b)) t.accumulate(b, g);
        });
    }

    Var sub(Var a, Var b) {
        check_same(a, b, "sub");
        Matrix out = value(a) - value(b);
        return push(std::move(out), [a, b](Tape& t, const Matrix& g) {
            if (t.needs(a)) t.accumulate(a, g);
            if (t.needs(b)) t.accumulate(b, -g);
        });
    }

    Var relu(Var x) {
        Matrix out = value(x).cwiseMax(0.0);
        return push(std::move(out), [x](Tape& t, const Matrix& g) {
            if (!t.needs(x)) return;
            t.accumulate(x, (t.value(x).array() > 0.0).select(g, 0.0));
        });
    }

    // Projects each row onto the unit sphere. Rows with norm below kMinNorm
    // map to the first basis vector and pass no gradient.
    Var normalize_rows(Var x) {
        const Matrix& in = value(x);
        Matrix out(in.rows(), in.cols());
        Eigen::VectorXd norms(in.rows());
        for (Eigen::Index r = 0; r < in.rows(); ++r) {
            norms(r) = in.row(r).norm();
            if (norms(r) < kMinNorm) {
                out.row(r).setZero();
                out(r, 0) = 1.0;
            } else {
                out.row(r) = in.row(r) / norms(r);
            }
        }
        const int self = static_cast<int>(nodes_.size());
        return push(std::move(out), [x, norms, self](Tape& t, const Matrix& g) {
            if (!t.needs(x)) return;
            const Matrix& u = t.nodes_[self].value;
            Matrix dx(u.rows(), u.cols());
            for (Eigen::Index r = 0; r < u.rows(); ++r) {
                if (norms(r) < kMinNorm) {
                    dx.row(r).setZero();
                    continue;
                }
                // (I - u u^T) g / |x|
                dx.row(r) = (g.row(r) - u.row(r).dot(g.row(r)) * u.row(r)) / norms(r);
            }
            t.accumulate(x, dx);
        });
    }

    Var exp(Var x) {
        Matrix out = value(x).array().exp().matrix();
        const int self = static_cast<int>(nodes_.size());
        return push(std::move(out), [x, self](Tape& t, const Matrix& g) {
            if (t.needs(x)) t.accumulate(x, g.cwiseProduct(t.nodes_[self].value));
        });
    }

    // x * s where s is 1x1.
    Var scale(Var x, Var s) {
        if (value(s).size() != 1) throw ShapeError("scale() needs a 1x1 factor");
        Matrix out = value(x) * scalar(s);
        return push(std::move(out), [x, s](Tape& t, const Matrix& g) {
            if (t.needs(x)) t.accumulate(x, g * t.scalar(s));
            if (t.needs(s)) t.accumulate(s, Matrix::Constant(1, 1, g.cwiseProduct(t.value(x)).sum()));
        });
    }

    Var scale_const(Var x, double c) {
        Matrix out = value(x) * c;
        return push(std::move(out), [x, c](Tape& t, const Matrix& g) {
            if (t.needs(x)) t.accumulate(x, g * c);
        });
    }

    Var add_const(Var x, const Matrix& c) {
        if (c.rows() != value(x).rows() || c.cols() != value(x).cols()) throw ShapeError("add_const shape");
        Matrix out = value(x) + c;
        return push(std::move(out), [x](Tape& t, const Matrix& g) {
            if (t.needs(x)) t.accumulate(x, g);
        });
    }

    // Row-wise log(sum(exp(x))) -> r x 1, max-shifted.
    Var logsumexp_rows(Var x) {
        const Matrix& in = value(x);
        Matrix out(in.rows(), 1);
        for (Eigen::Index r = 0; r < in.rows(); ++r) out(r, 0) = logsumexp(in.row(r));
        const int self = static_cast<int>(nodes_.size());
        return push(std::move(out), [x, self](Tape& t, const Matrix& g) {
            if (!t.needs(x)) return;
            const Matrix& in = t.value(x);
            const Matrix& lse = t.nodes_[self].value;
            Matrix dx(in.rows(), in.cols());
            for (Eigen::Index r = 0; r < in.rows(); ++r) {
                if (!std::isfinite(lse(r, 0))) {
                    dx.row(r).setZero();
                    continue;
                }
                dx.row(r) = (in.row(r).array() - lse(r, 0)).exp().matrix() * g(r, 0);
            }
            t.accumulate(x, dx);
        });
    }

    // x - logsumexp_rows(x) broadcast.
    Var log_softmax_rows(Var x) {
        Var lse = logsumexp_rows(x);
        const Matrix& in = value(x);
        Matrix out = in;
        for (Eigen::Index r = 0; r < in.rows(); ++r) out.row(r).array() -= value(lse)(r, 0);
        return push(std::move(out), [x, lse](Tape& t, const Matrix& g) {
            if (t.needs(x)) t.accumulate(x, g);
            if (t.needs(lse)) t.accumulate(lse, -g.rowwise().sum());
        });
    }

    // Picks x(r, cols[r]) for every row -> r x 1.
    Var gather_cols(Var x, std::vector<Eigen::Index> cols) {
        const Matrix& in = value(x);
        if (static_cast<Eigen::Index>(cols.size()) != in.rows()) throw ShapeError("gather_cols rows");
        Matrix out(in.rows(), 1);
        for (Eigen::Index r = 0; r < in.rows(); ++r) {
            if (cols[r] < 0 || cols[r] >= in.cols()) throw ShapeError("gather_cols index out of range");
            out(r, 0) = in(r, cols[r]);
        }
        return push(std::move(out), [x, cols = std::move(cols)](Tape& t, const Matrix& g) {
            if (!t.needs(x)) return;
            Matrix dx = Matrix::Zero(t.value(x).rows(), t.value(x).cols());
            for (Eigen::Index r = 0; r < dx.rows(); ++r) dx(r, cols[r]) += g(r, 0);
            t.accumulate(x, dx);
        });
    }

    // Column-wise concatenation of inputs with equal row counts.
    Var hcat(const std::vector<Var>& parts) {
        if (parts.empty()) throw ShapeError("hcat of nothing");
        Eigen::Index rows = value(parts[0]).rows(), cols = 0;
        for (auto p : parts) {
            if (value(p).rows() != rows) throw ShapeError("hcat row mismatch");
            cols += value(p).cols();
        }
        Matrix out(rows, cols);
        Eigen::Index c = 0;
        for (auto p : parts) {
            out.middleCols(c, value(p).cols()) = value(p);
            c += value(p).cols();
        }
        return push(std::move(out), [parts](Tape& t, const Matrix& g) {
            Eigen::Index c = 0;
            for (auto p : parts) {
                const auto w = t.value(p).cols();
                if (t.needs(p)) t.accumulate(p, g.middleCols(c, w));
                c += w;
            }
        });
    }

    Var mean(Var x) {
        const Matrix& in = value(x);
        const double n = static_cast<double>(in.size());
        Matrix out = Matrix::Constant(1, 1, in.sum() / n);
        return push(std::move(out), [x, n](Tape& t, const Matrix& g) {
            if (!t.needs(x)) return;
            t.accumulate(x, Matrix::Constant(t.value(x).rows(), t.value(x).cols(), g(0, 0) / n));
        });
    }

    Var sum(Var x) {
        Matrix out = Matrix::Constant(1, 1, value(x).sum());
        return push(std::move(out), [x](Tape& t, const Matrix& g) {
            if (!t.needs(x)) return;
            t.accumulate(x, Matrix::Constant(t.value(x).rows(), t.value(x).cols(), g(0, 0)));
        });
    }

    static double logsumexp(const Eigen::Ref<const RowVector>& row) {
        const double mx = row.maxCoeff();
        if (!std::isfinite(mx)) return mx;
        return mx + std::log((row.array() - mx).exp().sum());
    }

private:
    using Backward = std::function<void(Tape&, const Matrix&)>;

    struct Node {
        Matrix value;
        Matrix grad;
        Backward backward;
        bool requires_grad = false;
    };

    Var push(Matrix value, Backward backward, bool leaf_grad) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = leaf_grad;
        n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        return {static_cast<int>(nodes_.size()) - 1};
    }

    // Ops inherit requires_grad from their inputs so constant subgraphs are skipped.
    Var push(Matrix value, Backward backward) {
        Var v = push(std::move(value), std::move(backward), false);
        return v;
    }

    bool needs(Var v) const { return nodes_[v.id].requires_grad || nodes_[v.id].backward != nullptr; }

    void accumulate(Var v, const Matrix& g) {
        auto& n = nodes_[v.id];
        if (n.grad.size() == 0)
            n.grad = g;
        else
            n.grad += g;
    }

    void check_same(Var a, Var b, const char* op) const {
        if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
            throw ShapeError(std::string(op) + ": shape mismatch");
    }

    std::vector<Node> nodes_;
    std::vector<LeafRef> leaves_;
};

}  // namespace prank::ad

#endif  // PRANK_AUTODIFF_HPP
