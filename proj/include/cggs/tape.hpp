#pragma once

#include <array>
#include <cassert>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace cggs {

enum class Op : std::uint8_t {
    leaf,
    constant,
    add,
    sub,
    mul,
    div,
    neg,
    square,
    tanh,
    sigmoid,
    relu,
    ln,
    exp,
    softplus,
    affine, // a*x + b with constant a, b
};

const char* op_name(Op op);

/// One scalar operation recorded on a Tape.
///
/// `partial[k]` holds d(value)/d(input k) evaluated when the node was
/// recorded; unused input slots carry index -1.
struct TapeNode {
    double value = 0.0;
    std::array<double, 2> partial{0.0, 0.0};
    std::array<std::int32_t, 2> input{-1, -1};
    Op op = Op::constant;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid until the tape is cleared.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::int32_t index) : tape_(tape), index_(index) {}

    double value() const;
    Tape* tape() const { return tape_; }
    std::int32_t index() const { return index_; }

private:
    Tape* tape_ = nullptr;
    std::int32_t index_ = -1;
};

/// Append-only scalar computation graph with a reverse sweep.
///
/// Nodes are stored in creation order, so inputs always precede their
/// consumers and the graph is acyclic. A Tape is single-writer; `backward`
/// only reads node data.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    /// New independent variable. Leaves are numbered in creation order and
    /// that ordinal is the row of the gradient returned by `backward`.
    Var var(double value);
    /// A value that does not participate in the gradient.
    Var constant(double value);

    Var unary(Op op, Var x);
    Var binary(Op op, Var a, Var b);
    Var affine(Var x, double scale, double shift)
    {
        return record(Op::affine, scale * value_of(x) + shift, x.index(), scale, -1, 0.0);
    }

    // Hot paths used by the network layers; equivalent to binary(Op::add, ...)
    // and binary(Op::mul, ...).
    Var add(Var a, Var b)
    {
        return record(Op::add, value_of(a) + value_of(b), a.index(), 1.0, b.index(), 1.0);
    }
    Var mul(Var a, Var b)
    {
        const double x = value_of(a);
        const double y = value_of(b);
        return record(Op::mul, x * y, a.index(), y, b.index(), x);
    }

    /// d(root)/d(leaf) for every leaf on the tape.
    Eigen::VectorXd backward(Var root) const;
    /// Same as above, reusing caller-owned storage for the adjoint sweep.
    void backward(Var root, Eigen::VectorXd& gradient, std::vector<double>& adjoint) const;

    /// Drops every node but keeps the allocation for the next rebuild.
    void clear();
    void reserve(std::size_t nodes) { nodes_.reserve(nodes); }

    std::size_t size() const { return nodes_.size(); }
    std::size_t leaf_count() const { return leaves_.size(); }
    const TapeNode& node(std::int32_t index) const { return nodes_[static_cast<std::size_t>(index)]; }
    const std::vector<TapeNode>& nodes() const { return nodes_; }

private:
    Var push(const TapeNode& node);
    void check_owned(Var v) const;

    double value_of(Var v) const
    {
        assert(v.tape() == this && v.index() >= 0 && static_cast<std::size_t>(v.index()) < nodes_.size());
        return nodes_[static_cast<std::size_t>(v.index())].value;
    }
    Var record(Op op, double value, std::int32_t in0, double p0, std::int32_t in1, double p1)
    {
        TapeNode& n = nodes_.emplace_back();
        n.value = value;
        n.partial = {p0, p1};
        n.input = {in0, in1};
        n.op = op;
        return Var(this, static_cast<std::int32_t>(nodes_.size() - 1));
    }

    std::vector<TapeNode> nodes_;
    std::vector<std::int32_t> leaves_;
};

// Expression-friendly free functions. Mixed Var/double arithmetic records a
// single affine node instead of materialising the constant.
inline Var operator+(Var a, Var b) { return a.tape()->add(a, b); }
Var operator-(Var a, Var b);
inline Var operator*(Var a, Var b) { return a.tape()->mul(a, b); }
Var operator/(Var a, Var b);
Var operator-(Var x);

Var operator+(Var a, double b);
Var operator+(double a, Var b);
Var operator-(Var a, double b);
Var operator-(double a, Var b);
inline Var operator*(Var a, double b) { return a.tape()->affine(a, b, 0.0); }
inline Var operator*(double a, Var b) { return b.tape()->affine(b, a, 0.0); }
Var operator/(Var a, double b);

Var square(Var x);
Var tanh(Var x);
Var sigmoid(Var x);
Var relu(Var x);
/// max(x, 0); an alias of relu kept for readability at call sites that
/// clip rather than activate.
Var max0(Var x);
Var ln(Var x);
Var exp(Var x);
Var softplus(Var x);

// Plain-double versions of the nonlinearities, numerically stable and shared
// by the tape and by callers that do not need gradients.
double sigmoid(double x);
double softplus(double x);
double softplus_inverse(double y);

} // namespace cggs
