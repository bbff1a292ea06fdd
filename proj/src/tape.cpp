#include "cggs/tape.hpp"

#include <cassert>
#include <cmath>
#include <string>

#include "cggs/error.hpp"

namespace cggs {

namespace {

constexpr double kDivisionGuard = 1e-300;

} // namespace

const char* op_name(Op op)
{
    switch (op) {
    case Op::leaf: return "leaf";
    case Op::constant: return "constant";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::neg: return "neg";
    case Op::square: return "square";
    case Op::tanh: return "tanh";
    case Op::sigmoid: return "sigmoid";
    case Op::relu: return "relu";
    case Op::ln: return "ln";
    case Op::exp: return "exp";
    case Op::softplus: return "softplus";
    case Op::affine: return "affine";
    }
    return "?";
}

double sigmoid(double x)
{
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x)
{
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double softplus_inverse(double y)
{
    if (!(y > 0.0)) {
        throw DomainError("softplus_inverse requires a positive argument, got " + std::to_string(y));
    }
    // log(e^y - 1), written to stay accurate for both small and large y.
    return y > 30.0 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y));
}

double Var::value() const
{
    return tape_->node(index_).value;
}

Var Tape::push(const TapeNode& node)
{
    nodes_.push_back(node);
    return Var(this, static_cast<std::int32_t>(nodes_.size() - 1));
}

void Tape::check_owned(Var v) const
{
    assert(v.tape() == this && v.index() >= 0 && static_cast<std::size_t>(v.index()) < nodes_.size());
    (void)v;
}

Var Tape::var(double value)
{
    TapeNode n;
    n.value = value;
    n.op = Op::leaf;
    Var v = push(n);
    leaves_.push_back(v.index());
    return v;
}

Var Tape::constant(double value)
{
    TapeNode n;
    n.value = value;
    n.op = Op::constant;
    return push(n);
}

Var Tape::unary(Op op, Var x)
{
    check_owned(x);
    const double v = x.value();
    TapeNode n;
    n.op = op;
    n.input = {x.index(), -1};
    switch (op) {
    case Op::neg:
        n.value = -v;
        n.partial[0] = -1.0;
        break;
    case Op::square:
        n.value = v * v;
        n.partial[0] = 2.0 * v;
        break;
    case Op::tanh: {
        const double h = std::tanh(v);
        n.value = h;
        n.partial[0] = 1.0 - h * h;
        break;
    }
    case Op::sigmoid: {
        const double s = sigmoid(v);
        n.value = s;
        n.partial[0] = s * (1.0 - s);
        break;
    }
    case Op::relu:
        // The subgradient at exactly zero is taken as zero.
        n.value = v > 0.0 ? v : 0.0;
        n.partial[0] = v > 0.0 ? 1.0 : 0.0;
        break;
    case Op::ln:
        if (!(v > 0.0)) {
            throw DomainError("ln of non-positive value " + std::to_string(v));
        }
        n.value = std::log(v);
        n.partial[0] = 1.0 / v;
        break;
    case Op::exp:
        n.value = std::exp(v);
        n.partial[0] = n.value;
        break;
    case Op::softplus:
        n.value = softplus(v);
        n.partial[0] = sigmoid(v);
        break;
    default:
        throw DomainError(std::string("not a unary op: ") + op_name(op));
    }
    return push(n);
}

Var Tape::binary(Op op, Var a, Var b)
{
    check_owned(a);
    check_owned(b);
    const double x = a.value();
    const double y = b.value();
    TapeNode n;
    n.op = op;
    n.input = {a.index(), b.index()};
    switch (op) {
    case Op::add:
        n.value = x + y;
        n.partial = {1.0, 1.0};
        break;
    case Op::sub:
        n.value = x - y;
        n.partial = {1.0, -1.0};
        break;
    case Op::mul:
        n.value = x * y;
        n.partial = {y, x};
        break;
    case Op::div:
        if (!(std::abs(y) > kDivisionGuard)) {
            throw DomainError("division by " + std::to_string(y));
        }
        n.value = x / y;
        n.partial = {1.0 / y, -x / (y * y)};
        break;
    default:
        throw DomainError(std::string("not a binary op: ") + op_name(op));
    }
    return push(n);
}

Eigen::VectorXd Tape::backward(Var root) const
{
    Eigen::VectorXd gradient;
    std::vector<double> adjoint;
    backward(root, gradient, adjoint);
    return gradient;
}

void Tape::backward(Var root, Eigen::VectorXd& gradient, std::vector<double>& adjoint) const
{
    check_owned(root);
    const auto top = static_cast<std::size_t>(root.index());
    adjoint.assign(top + 1, 0.0);
    adjoint[top] = 1.0;

    const TapeNode* nodes = nodes_.data();
    for (std::size_t i = top + 1; i-- > 0;) {
        const double a = adjoint[i];
        if (a == 0.0) {
            continue;
        }
        const TapeNode& n = nodes[i];
        if (n.input[0] >= 0) {
            adjoint[static_cast<std::size_t>(n.input[0])] += a * n.partial[0];
        }
        if (n.input[1] >= 0) {
            adjoint[static_cast<std::size_t>(n.input[1])] += a * n.partial[1];
        }
    }

    gradient.setZero(static_cast<Eigen::Index>(leaves_.size()));
    for (std::size_t k = 0; k < leaves_.size(); ++k) {
        const auto idx = static_cast<std::size_t>(leaves_[k]);
        if (idx <= top) {
            gradient[static_cast<Eigen::Index>(k)] = adjoint[idx];
        }
    }
}

void Tape::clear()
{
    nodes_.clear();
    leaves_.clear();
}

Var operator-(Var a, Var b) { return a.tape()->binary(Op::sub, a, b); }
Var operator/(Var a, Var b) { return a.tape()->binary(Op::div, a, b); }
Var operator-(Var x) { return x.tape()->unary(Op::neg, x); }

Var operator+(Var a, double b) { return a.tape()->affine(a, 1.0, b); }
Var operator+(double a, Var b) { return b.tape()->affine(b, 1.0, a); }
Var operator-(Var a, double b) { return a.tape()->affine(a, 1.0, -b); }
Var operator-(double a, Var b) { return b.tape()->affine(b, -1.0, a); }
Var operator/(Var a, double b)
{
    if (!(std::abs(b) > kDivisionGuard)) {
        throw DomainError("division by " + std::to_string(b));
    }
    return a.tape()->affine(a, 1.0 / b, 0.0);
}

Var square(Var x) { return x.tape()->unary(Op::square, x); }
Var tanh(Var x) { return x.tape()->unary(Op::tanh, x); }
Var sigmoid(Var x) { return x.tape()->unary(Op::sigmoid, x); }
Var relu(Var x) { return x.tape()->unary(Op::relu, x); }
Var max0(Var x) { return x.tape()->unary(Op::relu, x); }
Var ln(Var x) { return x.tape()->unary(Op::ln, x); }
Var exp(Var x) { return x.tape()->unary(Op::exp, x); }
Var softplus(Var x) { return x.tape()->unary(Op::softplus, x); }

} // namespace cggs
