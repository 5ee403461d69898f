#pragma once

// Real-valued expressions over (t, x1..xK): parsing, evaluation, exact
// partial differentiation, and printing.
//
// Grammar (whitespace insensitive):
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | power
//   power   := primary ('^' unary)?          right associative
//   primary := number | 't' | 'x'<k> | func '(' expr ')' | '(' expr ')'
//   func    := exp | log | sqrt | sin | cos | neg

#include "radnerlab/error.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace radnerlab {

enum class NodeKind : std::uint8_t {
    constant,
    variable,
    add,
    sub,
    mul,
    div,
    pow,
    neg,
    exp,
    log,
    sqrt,
    sin,
    cos,
};

inline bool is_binary(NodeKind k) { return k >= NodeKind::add && k <= NodeKind::pow; }

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
    NodeKind kind = NodeKind::constant;
    double value = 0.0;  // constant
    int var = 0;         // variable: 0 is t, k >= 1 is x_k
    NodePtr lhs;         // unary argument or binary left operand
    NodePtr rhs;
};

inline constexpr int time_variable = 0;

namespace detail {

inline NodePtr make_constant(double v) {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::constant;
    n->value = v;
    return n;
}

inline NodePtr make_variable(int index) {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::variable;
    n->var = index;
    return n;
}

inline NodePtr make_node(NodeKind kind, NodePtr lhs, NodePtr rhs = nullptr) {
    auto n = std::make_shared<Node>();
    n->kind = kind;
    n->lhs = std::move(lhs);
    n->rhs = std::move(rhs);
    return n;
}

inline double apply_unary(NodeKind k, double a) {
    switch (k) {
    case NodeKind::neg: return -a;
    case NodeKind::exp: return std::exp(a);
    case NodeKind::log: return std::log(a);
    case NodeKind::sqrt: return std::sqrt(a);
    case NodeKind::sin: return std::sin(a);
    case NodeKind::cos: return std::cos(a);
    default: return std::nan("");
    }
}

inline double apply_binary(NodeKind k, double a, double b) {
    switch (k) {
    case NodeKind::add: return a + b;
    case NodeKind::sub: return a - b;
    case NodeKind::mul: return a * b;
    case NodeKind::div: return a / b;
    case NodeKind::pow: return std::pow(a, b);
    default: return std::nan("");
    }
}

inline bool is_const(const NodePtr& n, double v) {
    return n->kind == NodeKind::constant && n->value == v;
}

inline bool is_const(const NodePtr& n) { return n->kind == NodeKind::constant; }

// Builders used by differentiation and expression algebra. They fold
// constant subtrees and the additive/multiplicative identities, nothing more.
inline NodePtr fold_unary(NodeKind k, NodePtr a) {
    if (is_const(a)) {
        double v = apply_unary(k, a->value);
        if (std::isfinite(v)) return make_constant(v);
    }
    if (k == NodeKind::neg && a->kind == NodeKind::neg) return a->lhs;
    return make_node(k, std::move(a));
}

inline NodePtr fold_binary(NodeKind k, NodePtr a, NodePtr b) {
    if (is_const(a) && is_const(b)) {
        double v = apply_binary(k, a->value, b->value);
        if (std::isfinite(v)) return make_constant(v);
    }
    switch (k) {
    case NodeKind::add:
        if (is_const(a, 0.0)) return b;
        if (is_const(b, 0.0)) return a;
        break;
    case NodeKind::sub:
        if (is_const(b, 0.0)) return a;
        if (is_const(a, 0.0)) return fold_unary(NodeKind::neg, b);
        break;
    case NodeKind::mul:
        if (is_const(a, 0.0) || is_const(b, 0.0)) return make_constant(0.0);
        if (is_const(a, 1.0)) return b;
        if (is_const(b, 1.0)) return a;
        break;
    case NodeKind::div:
        if (is_const(a, 0.0) && !is_const(b, 0.0)) return make_constant(0.0);
        if (is_const(b, 1.0)) return a;
        break;
    case NodeKind::pow:
        if (is_const(b, 1.0)) return a;
        if (is_const(b, 0.0)) return make_constant(1.0);
        break;
    default:
        break;
    }
    return make_node(k, std::move(a), std::move(b));
}

inline const char* function_name(NodeKind k) {
    switch (k) {
    case NodeKind::neg: return "neg";
    case NodeKind::exp: return "exp";
    case NodeKind::log: return "log";
    case NodeKind::sqrt: return "sqrt";
    case NodeKind::sin: return "sin";
    case NodeKind::cos: return "cos";
    default: return "?";
    }
}

inline char operator_symbol(NodeKind k) {
    switch (k) {
    case NodeKind::add: return '+';
    case NodeKind::sub: return '-';
    case NodeKind::mul: return '*';
    case NodeKind::div: return '/';
    case NodeKind::pow: return '^';
    default: return '?';
    }
}

inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void print_node(const Node& n, std::string& out) {
    switch (n.kind) {
    case NodeKind::constant:
        if (std::signbit(n.value)) {
            out += "(-";
            out += format_number(-n.value);
            out += ')';
        } else {
            out += format_number(n.value);
        }
        return;
    case NodeKind::variable:
        if (n.var == time_variable) {
            out += 't';
        } else {
            out += 'x';
            out += std::to_string(n.var);
        }
        return;
    case NodeKind::neg:
        out += "(-";
        print_node(*n.lhs, out);
        out += ')';
        return;
    default:
        break;
    }
    if (is_binary(n.kind)) {
        out += '(';
        print_node(*n.lhs, out);
        out += operator_symbol(n.kind);
        print_node(*n.rhs, out);
        out += ')';
    } else {
        out += function_name(n.kind);
        out += '(';
        print_node(*n.lhs, out);
        out += ')';
    }
}

inline std::string print_node(const Node& n) {
    std::string s;
    print_node(n, s);
    return s;
}

inline bool same_tree(const Node& a, const Node& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
    case NodeKind::constant:
        // bitwise equality, so -0 and 0 differ
        return std::signbit(a.value) == std::signbit(b.value) && a.value == b.value;
    case NodeKind::variable: return a.var == b.var;
    default: break;
    }
    if (!same_tree(*a.lhs, *b.lhs)) return false;
    return !is_binary(a.kind) || same_tree(*a.rhs, *b.rhs);
}

inline int max_variable(const Node& n) {
    switch (n.kind) {
    case NodeKind::constant: return 0;
    case NodeKind::variable: return n.var;
    default: break;
    }
    int m = max_variable(*n.lhs);
    if (is_binary(n.kind)) m = std::max(m, max_variable(*n.rhs));
    return m;
}

inline const char* domain_message(NodeKind k) {
    switch (k) {
    case NodeKind::log: return "log of nonpositive argument";
    case NodeKind::sqrt: return "sqrt of negative argument";
    case NodeKind::div: return "division by zero";
    case NodeKind::pow: return "power outside its real domain";
    case NodeKind::exp: return "exp overflow";
    default: return "non-finite result";
    }
}

// Reference tree walker. Reports the innermost failing subexpression.
inline double walk(const Node& n, double t, std::span<const double> x) {
    switch (n.kind) {
    case NodeKind::constant: return n.value;
    case NodeKind::variable: return n.var == time_variable ? t : x[n.var - 1];
    default: break;
    }
    double r;
    if (is_binary(n.kind)) {
        double a = walk(*n.lhs, t, x);
        double b = walk(*n.rhs, t, x);
        r = apply_binary(n.kind, a, b);
    } else {
        r = apply_unary(n.kind, walk(*n.lhs, t, x));
    }
    if (!std::isfinite(r)) throw DomainError(domain_message(n.kind), print_node(n));
    return r;
}

inline NodePtr differentiate_node(const NodePtr& n, int var) {
    using K = NodeKind;
    const NodePtr& a = n->lhs;
    const NodePtr& b = n->rhs;
    switch (n->kind) {
    case K::constant: return make_constant(0.0);
    case K::variable: return make_constant(n->var == var ? 1.0 : 0.0);
    case K::add: return fold_binary(K::add, differentiate_node(a, var), differentiate_node(b, var));
    case K::sub: return fold_binary(K::sub, differentiate_node(a, var), differentiate_node(b, var));
    case K::mul:
        return fold_binary(K::add, fold_binary(K::mul, differentiate_node(a, var), b),
                           fold_binary(K::mul, a, differentiate_node(b, var)));
    case K::div: {
        // (a' b - a b') / b^2
        NodePtr num = fold_binary(K::sub, fold_binary(K::mul, differentiate_node(a, var), b),
                                  fold_binary(K::mul, a, differentiate_node(b, var)));
        return fold_binary(K::div, num, fold_binary(K::mul, b, b));
    }
    case K::pow: {
        NodePtr da = differentiate_node(a, var);
        NodePtr db = differentiate_node(b, var);
        if (is_const(db, 0.0)) {
            // c * a^(c-1) * a'
            NodePtr lowered = fold_binary(K::pow, a, fold_binary(K::sub, b, make_constant(1.0)));
            return fold_binary(K::mul, fold_binary(K::mul, b, lowered), da);
        }
        // a^b * (b' log a + b a'/a)
        NodePtr inner = fold_binary(K::add, fold_binary(K::mul, db, fold_unary(K::log, a)),
                                    fold_binary(K::div, fold_binary(K::mul, b, da), a));
        return fold_binary(K::mul, n, inner);
    }
    case K::neg: return fold_unary(K::neg, differentiate_node(a, var));
    case K::exp: return fold_binary(K::mul, n, differentiate_node(a, var));
    case K::log: return fold_binary(K::div, differentiate_node(a, var), a);
    case K::sqrt:
        return fold_binary(K::div, differentiate_node(a, var),
                           fold_binary(K::mul, make_constant(2.0), n));
    case K::sin: return fold_binary(K::mul, fold_unary(K::cos, a), differentiate_node(a, var));
    case K::cos:
        return fold_binary(K::mul, fold_unary(K::neg, fold_unary(K::sin, a)),
                           differentiate_node(a, var));
    }
    return make_constant(0.0);
}

inline NodePtr substitute_node(const NodePtr& n, int var, const NodePtr& replacement) {
    switch (n->kind) {
    case NodeKind::constant: return n;
    case NodeKind::variable: return n->var == var ? replacement : n;
    default: break;
    }
    if (is_binary(n->kind)) {
        return fold_binary(n->kind, substitute_node(n->lhs, var, replacement),
                           substitute_node(n->rhs, var, replacement));
    }
    return fold_unary(n->kind, substitute_node(n->lhs, var, replacement));
}

// Postfix program for the hot evaluation path.
struct Instruction {
    NodeKind op;
    int var;
    double value;
};

struct Program {
    std::vector<Instruction> code;
    std::size_t max_stack = 0;
};

inline std::size_t emit(const Node& n, std::vector<Instruction>& code) {
    switch (n.kind) {
    case NodeKind::constant:
        code.push_back({n.kind, 0, n.value});
        return 1;
    case NodeKind::variable:
        code.push_back({n.kind, n.var, 0.0});
        return 1;
    default:
        break;
    }
    std::size_t depth = emit(*n.lhs, code);
    if (is_binary(n.kind)) depth = std::max(depth, 1 + emit(*n.rhs, code));
    code.push_back({n.kind, 0, 0.0});
    return depth;
}

inline Program compile(const Node& root) {
    Program p;
    p.max_stack = emit(root, p.code);
    return p;
}

inline constexpr std::size_t fast_stack_limit = 64;

} // namespace detail

/// Immutable expression over (t, x1..xK). Cheap to copy (shared tree).
class Expr {
public:
    Expr() : Expr(detail::make_constant(0.0), 0) {}

    Expr(NodePtr root, int dims) : root_(std::move(root)), dims_(dims) {
        if (detail::max_variable(*root_) > dims_) {
            throw ParseError("variable index out of range (K=" + std::to_string(dims_) + ")", 0);
        }
        program_ = std::make_shared<const detail::Program>(detail::compile(*root_));
    }

    static Expr constant(double v, int dims = 0) { return {detail::make_constant(v), dims}; }

    static Expr variable(int index, int dims) { return {detail::make_variable(index), dims}; }

    const Node& root() const { return *root_; }
    const NodePtr& root_ptr() const { return root_; }
    int dims() const { return dims_; }

    bool is_constant() const { return root_->kind == NodeKind::constant; }

    /// Value at (t, x). Throws DomainError naming the offending subexpression.
    double operator()(double t, std::span<const double> x) const {
        const auto& prog = *program_;
        if (prog.max_stack > detail::fast_stack_limit) return detail::walk(*root_, t, x);
        std::array<double, detail::fast_stack_limit> stack;
        std::size_t top = 0;
        for (const auto& ins : prog.code) {
            switch (ins.op) {
            case NodeKind::constant: stack[top++] = ins.value; continue;
            case NodeKind::variable:
                stack[top++] = ins.var == time_variable ? t : x[ins.var - 1];
                continue;
            case NodeKind::add: --top; stack[top - 1] += stack[top]; break;
            case NodeKind::sub: --top; stack[top - 1] -= stack[top]; break;
            case NodeKind::mul: --top; stack[top - 1] *= stack[top]; break;
            case NodeKind::div: --top; stack[top - 1] /= stack[top]; break;
            case NodeKind::pow:
                --top;
                stack[top - 1] = std::pow(stack[top - 1], stack[top]);
                break;
            default: stack[top - 1] = detail::apply_unary(ins.op, stack[top - 1]); break;
            }
            if (!std::isfinite(stack[top - 1])) {
                detail::walk(*root_, t, x);  // locates and throws
                throw DomainError("non-finite result", to_string());
            }
        }
        return stack[0];
    }

    double operator()(double t, std::initializer_list<double> x) const {
        return (*this)(t, std::span<const double>(x.begin(), x.size()));
    }

    std::string to_string() const { return detail::print_node(*root_); }

    bool same_as(const Expr& other) const { return detail::same_tree(*root_, *other.root_); }

    friend Expr operator+(const Expr& a, const Expr& b) { return binary(NodeKind::add, a, b); }
    friend Expr operator-(const Expr& a, const Expr& b) { return binary(NodeKind::sub, a, b); }
    friend Expr operator*(const Expr& a, const Expr& b) { return binary(NodeKind::mul, a, b); }
    friend Expr operator/(const Expr& a, const Expr& b) { return binary(NodeKind::div, a, b); }
    friend Expr operator*(double a, const Expr& b) { return constant(a, b.dims_) * b; }

private:
    static Expr binary(NodeKind k, const Expr& a, const Expr& b) {
        return {detail::fold_binary(k, a.root_, b.root_), std::max(a.dims_, b.dims_)};
    }

    NodePtr root_;
    int dims_;
    std::shared_ptr<const detail::Program> program_;
};

/// Exact partial derivative. `var` is 0 for t, k for x_k.
inline Expr differentiate(const Expr& e, int var) {
    return {detail::differentiate_node(e.root_ptr(), var), e.dims()};
}

/// Replaces variable `var` by the constant `value` (used to pin t = T).
inline Expr substitute(const Expr& e, int var, double value) {
    return {detail::substitute_node(e.root_ptr(), var, detail::make_constant(value)), e.dims()};
}

inline double evaluate(const Expr& e, double t, std::span<const double> x) { return e(t, x); }

namespace detail {

class Parser {
public:
    Parser(std::string_view text, int dims) : text_(text), dims_(dims) {}

    NodePtr parse() {
        NodePtr e = expr();
        skip_space();
        if (pos_ != text_.size()) fail("unexpected character '" + std::string(1, text_[pos_]) + "'");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, pos_); }

    void skip_space() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    NodePtr expr() {
        NodePtr lhs = term();
        for (;;) {
            if (accept('+')) {
                lhs = make_node(NodeKind::add, lhs, term());
            } else if (accept('-')) {
                lhs = make_node(NodeKind::sub, lhs, term());
            } else {
                return lhs;
            }
        }
    }

    NodePtr term() {
        NodePtr lhs = unary();
        for (;;) {
            if (accept('*')) {
                lhs = make_node(NodeKind::mul, lhs, unary());
            } else if (accept('/')) {
                lhs = make_node(NodeKind::div, lhs, unary());
            } else {
                return lhs;
            }
        }
    }

    NodePtr unary() {
        if (accept('-')) {
            NodePtr arg = unary();
            // negative literals are constants so printed constants reparse identically
            if (arg->kind == NodeKind::constant) return make_constant(-arg->value);
            return make_node(NodeKind::neg, arg);
        }
        if (accept('+')) return unary();
        return power();
    }

    NodePtr power() {
        NodePtr base = primary();
        if (accept('^')) return make_node(NodeKind::pow, base, unary());
        return base;
    }

    NodePtr primary() {
        skip_space();
        if (pos_ >= text_.size()) fail("unexpected end of expression");
        char c = text_[pos_];
        if (accept('(')) {
            NodePtr e = expr();
            if (!accept(')')) fail("expected ')'");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c))) return identifier();
        fail("unexpected character '" + std::string(1, c) + "'");
    }

    NodePtr number() {
        std::string s(text_.substr(pos_));
        char* end = nullptr;
        double v = std::strtod(s.c_str(), &end);
        if (end == s.c_str()) fail("malformed number");
        pos_ += static_cast<std::size_t>(end - s.c_str());
        return make_constant(v);
    }

    NodePtr identifier() {
        std::size_t start = pos_;
        while (pos_ < text_.size() && std::isalnum(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        std::string name(text_.substr(start, pos_ - start));
        if (name == "t") return make_variable(time_variable);
        if (name.size() > 1 && name[0] == 'x' &&
            name.find_first_not_of("0123456789", 1) == std::string::npos) {
            int index = std::stoi(name.substr(1));
            if (index < 1 || index > dims_) {
                throw ParseError("variable index out of range: " + name + " (K=" +
                                     std::to_string(dims_) + ")",
                                 start);
            }
            return make_variable(index);
        }
        static constexpr std::array<std::pair<std::string_view, NodeKind>, 6> functions{{
            {"exp", NodeKind::exp},
            {"log", NodeKind::log},
            {"sqrt", NodeKind::sqrt},
            {"sin", NodeKind::sin},
            {"cos", NodeKind::cos},
            {"neg", NodeKind::neg},
        }};
        for (const auto& [fname, kind] : functions) {
            if (name == fname) {
                if (!accept('(')) fail("expected '(' after " + name);
                NodePtr arg = expr();
                if (!accept(')')) fail("expected ')'");
                return make_node(kind, arg);
            }
        }
        throw ParseError("unknown identifier '" + name + "'", start);
    }

    std::string_view text_;
    int dims_;
    std::size_t pos_ = 0;
};

} // namespace detail

/// Parses `text` over variables t, x1..x`dims`.
inline Expr parse(std::string_view text, int dims) {
    return {detail::Parser(text, dims).parse(), dims};
}

} // namespace radnerlab
