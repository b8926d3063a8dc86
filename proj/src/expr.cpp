#include "thinflow/expr.hpp"
#include "thinflow/errors.hpp"

#include <cassert>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>

namespace thinflow {

namespace {
enum Tag : int {
    t_const, t_var, t_add, t_sub, t_mul, t_div, t_neg, t_pow,
    t_sin, t_cos, t_exp, t_flat
};
} // namespace

namespace detail {
struct ExprNode {
    int tag;
    double value = 0.0;          // t_const
    int slot = -1;               // t_var
    int ipow = 0;                // t_pow
    std::vector<double> q;       // t_flat: Q coefficients, q[j]*s^j with s = 1/u
    std::shared_ptr<const ExprNode> a, b;
};
} // namespace detail

namespace {

using Node = detail::ExprNode;
using NodePtr = std::shared_ptr<const Node>;

NodePtr mk(Node n) { return std::make_shared<const Node>(std::move(n)); }

NodePtr mk_const(double v) { return mk(Node{t_const, v, -1, 0, {}, nullptr, nullptr}); }
NodePtr mk_var(int slot) { return mk(Node{t_var, 0.0, slot, 0, {}, nullptr, nullptr}); }

bool is_const(const NodePtr& n, double* v = nullptr) {
    if (n->tag != t_const) return false;
    if (v) *v = n->value;
    return true;
}
bool is_const_eq(const NodePtr& n, double v) {
    return n->tag == t_const && n->value == v;
}

double flat_eval(const std::vector<double>& q, double u) {
    if (!(u > 0.0)) return 0.0;
    const double s = 1.0 / u;
    if (s > 690.0) return 0.0;  // exp(-s) underflows against any polynomial prefactor
    double p = 0.0;
    for (std::size_t j = q.size(); j-- > 0;) p = p * s + q[j];
    return p * std::exp(-s);
}

NodePtr mk_neg(NodePtr a);

NodePtr mk_add(NodePtr a, NodePtr b) {
    double x, y;
    if (is_const(a, &x) && is_const(b, &y)) return mk_const(x + y);
    if (is_const_eq(a, 0.0)) return b;
    if (is_const_eq(b, 0.0)) return a;
    return mk(Node{t_add, 0, -1, 0, {}, std::move(a), std::move(b)});
}

NodePtr mk_sub(NodePtr a, NodePtr b) {
    double x, y;
    if (is_const(a, &x) && is_const(b, &y)) return mk_const(x - y);
    if (is_const_eq(b, 0.0)) return a;
    if (is_const_eq(a, 0.0)) return mk_neg(std::move(b));
    return mk(Node{t_sub, 0, -1, 0, {}, std::move(a), std::move(b)});
}

NodePtr mk_mul(NodePtr a, NodePtr b) {
    double x, y;
    if (is_const(a, &x) && is_const(b, &y)) return mk_const(x * y);
    if (is_const_eq(a, 0.0) || is_const_eq(b, 0.0)) return mk_const(0.0);
    if (is_const_eq(a, 1.0)) return b;
    if (is_const_eq(b, 1.0)) return a;
    return mk(Node{t_mul, 0, -1, 0, {}, std::move(a), std::move(b)});
}

NodePtr mk_div(NodePtr a, NodePtr b) {
    double y;
    if (is_const_eq(a, 0.0)) return mk_const(0.0);
    if (is_const(b, &y)) {
        if (y == 0.0) fail(errkind::ExprParse, "division by constant zero");
        return mk_mul(std::move(a), mk_const(1.0 / y));
    }
    return mk(Node{t_div, 0, -1, 0, {}, std::move(a), std::move(b)});
}

NodePtr mk_neg(NodePtr a) {
    double x;
    if (is_const(a, &x)) return mk_const(-x);
    if (a->tag == t_neg) return a->a;
    return mk(Node{t_neg, 0, -1, 0, {}, std::move(a), nullptr});
}

NodePtr mk_pow(NodePtr a, int k) {
    if (k == 0) return mk_const(1.0);
    if (k == 1) return a;
    double x;
    if (is_const(a, &x)) return mk_const(std::pow(x, k));
    return mk(Node{t_pow, 0, -1, k, {}, std::move(a), nullptr});
}

NodePtr mk_fn(int tag, NodePtr a) {
    double x;
    if (is_const(a, &x)) {
        switch (tag) {
            case t_sin: return mk_const(std::sin(x));
            case t_cos: return mk_const(std::cos(x));
            case t_exp: return mk_const(std::exp(x));
        }
    }
    return mk(Node{tag, 0, -1, 0, {}, std::move(a), nullptr});
}

NodePtr mk_flat(std::vector<double> q, NodePtr a) {
    // drop trailing zero coefficients; a structurally zero Q collapses the node
    while (!q.empty() && q.back() == 0.0) q.pop_back();
    if (q.empty()) return mk_const(0.0);
    double x;
    if (is_const(a, &x)) return mk_const(flat_eval(q, x));
    return mk(Node{t_flat, 0, -1, 0, std::move(q), std::move(a), nullptr});
}

NodePtr mk_ramp(NodePtr a) { return mk_flat({1.0}, std::move(a)); }

// smoothstep(u) = ramp(u) / (ramp(u) + ramp(1-u)) — exact 0/1 plateaus outside (0,1)
NodePtr mk_smoothstep(NodePtr a) {
    NodePtr num = mk_ramp(a);
    NodePtr den = mk_add(num, mk_ramp(mk_sub(mk_const(1.0), a)));
    return mk_div(num, den);
}

// bump(x,a,b) = ramp(x-a)·ramp(b-x) / ramp((b-a)/2)^2 — unit height at midpoint
NodePtr mk_bump(NodePtr x, NodePtr a, NodePtr b) {
    NodePtr half = mk_mul(mk_const(0.5), mk_sub(b, a));
    NodePtr norm = mk_ramp(half);
    NodePtr num = mk_mul(mk_ramp(mk_sub(x, a)), mk_ramp(mk_sub(b, x)));
    return mk_div(std::move(num), mk_mul(norm, norm));
}

NodePtr diff_node(const NodePtr& n, int slot) {
    switch (n->tag) {
        case t_const: return mk_const(0.0);
        case t_var: return mk_const(n->slot == slot ? 1.0 : 0.0);
        case t_add: return mk_add(diff_node(n->a, slot), diff_node(n->b, slot));
        case t_sub: return mk_sub(diff_node(n->a, slot), diff_node(n->b, slot));
        case t_mul:
            return mk_add(mk_mul(diff_node(n->a, slot), n->b),
                          mk_mul(n->a, diff_node(n->b, slot)));
        case t_div:
            // (a/b)' = (a'b - ab') / b^2
            return mk_div(mk_sub(mk_mul(diff_node(n->a, slot), n->b),
                                 mk_mul(n->a, diff_node(n->b, slot))),
                          mk_mul(n->b, n->b));
        case t_neg: return mk_neg(diff_node(n->a, slot));
        case t_pow:
            return mk_mul(mk_mul(mk_const(n->ipow), mk_pow(n->a, n->ipow - 1)),
                          diff_node(n->a, slot));
        case t_sin: return mk_mul(mk_fn(t_cos, n->a), diff_node(n->a, slot));
        case t_cos: return mk_neg(mk_mul(mk_fn(t_sin, n->a), diff_node(n->a, slot)));
        case t_exp: return mk_mul(mk_fn(t_exp, n->a), diff_node(n->a, slot));
        case t_flat: {
            // d/du [Q(1/u) e^{-1/u}] = s^2 (Q(s) - Q'(s)) e^{-s},  s = 1/u
            const auto& q = n->q;
            std::vector<double> r(q.size() + 2, 0.0);
            for (std::size_t j = 0; j < q.size(); ++j) r[j + 2] += q[j];          // s^2 Q
            for (std::size_t j = 1; j < q.size(); ++j) r[j + 1] -= double(j) * q[j]; // -s^2 Q'
            return mk_mul(mk_flat(std::move(r), n->a), diff_node(n->a, slot));
        }
    }
    fail(errkind::ExprParse, "corrupt expression node");
}

// ---------------------------------------------------------------------------
// parser

struct Parser {
    const std::string& s;
    const std::vector<std::string>& vars;
    std::size_t pos = 0;

    [[noreturn]] void err(const std::string& msg) const {
        std::ostringstream os;
        os << msg << " at position " << pos << " in \"" << s << "\"";
        fail(errkind::ExprParse, os.str());
    }

    void skip_ws() {
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    char peek() {
        skip_ws();
        return pos < s.size() ? s[pos] : '\0';
    }
    bool accept(char c) {
        if (peek() == c) { ++pos; return true; }
        return false;
    }
    void expect(char c) {
        if (!accept(c)) err(std::string("expected '") + c + "'");
    }

    NodePtr parse_expr() {
        NodePtr lhs = parse_term();
        for (;;) {
            if (accept('+')) lhs = mk_add(std::move(lhs), parse_term());
            else if (accept('-')) lhs = mk_sub(std::move(lhs), parse_term());
            else return lhs;
        }
    }

    NodePtr parse_term() {
        NodePtr lhs = parse_unary();
        for (;;) {
            if (accept('*')) lhs = mk_mul(std::move(lhs), parse_unary());
            else if (accept('/')) lhs = mk_div(std::move(lhs), parse_unary());
            else return lhs;
        }
    }

    NodePtr parse_unary() {
        if (accept('-')) return mk_neg(parse_unary());
        return parse_power();
    }

    NodePtr parse_power() {
        NodePtr base = parse_atom();
        if (accept('^')) {
            skip_ws();
            std::size_t start = pos;
            while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
            if (pos == start) err("exponent must be a nonnegative integer literal");
            int k = std::atoi(s.substr(start, pos - start).c_str());
            if (k > 64) err("exponent too large");
            return mk_pow(std::move(base), k);
        }
        return base;
    }

    NodePtr parse_atom() {
        skip_ws();
        if (pos >= s.size()) err("unexpected end of expression");
        char c = s[pos];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            char* end = nullptr;
            double v = std::strtod(s.c_str() + pos, &end);
            if (end == s.c_str() + pos) err("bad number");
            pos = static_cast<std::size_t>(end - s.c_str());
            return mk_const(v);
        }
        if (c == '(') {
            ++pos;
            NodePtr e = parse_expr();
            expect(')');
            return e;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t start = pos;
            while (pos < s.size() &&
                   (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_'))
                ++pos;
            std::string name = s.substr(start, pos - start);
            if (peek() == '(') return parse_call(name);
            if (name == "pi") return mk_const(3.14159265358979323846);
            for (std::size_t i = 0; i < vars.size(); ++i)
                if (vars[i] == name) return mk_var(static_cast<int>(i));
            err("unknown identifier '" + name + "'");
        }
        err("unexpected character");
    }

    NodePtr parse_call(const std::string& name) {
        expect('(');
        std::vector<NodePtr> args;
        if (peek() != ')') {
            args.push_back(parse_expr());
            while (accept(',')) args.push_back(parse_expr());
        }
        expect(')');
        auto want = [&](std::size_t n) {
            if (args.size() != n)
                err(name + " expects " + std::to_string(n) + " argument(s)");
        };
        if (name == "sin") { want(1); return mk_fn(t_sin, args[0]); }
        if (name == "cos") { want(1); return mk_fn(t_cos, args[0]); }
        if (name == "exp") { want(1); return mk_fn(t_exp, args[0]); }
        if (name == "ramp") { want(1); return mk_ramp(args[0]); }
        if (name == "smoothstep") { want(1); return mk_smoothstep(args[0]); }
        if (name == "bump") { want(3); return mk_bump(args[0], args[1], args[2]); }
        err("unknown function '" + name + "'");
    }
};

void dump_node(const NodePtr& n, std::ostream& os, const std::vector<std::string>& vars) {
    switch (n->tag) {
        case t_const: os << n->value; return;
        case t_var:
            if (n->slot >= 0 && n->slot < static_cast<int>(vars.size())) os << vars[n->slot];
            else os << "$" << n->slot;
            return;
        case t_add: os << "(+ "; dump_node(n->a, os, vars); os << " "; dump_node(n->b, os, vars); os << ")"; return;
        case t_sub: os << "(- "; dump_node(n->a, os, vars); os << " "; dump_node(n->b, os, vars); os << ")"; return;
        case t_mul: os << "(* "; dump_node(n->a, os, vars); os << " "; dump_node(n->b, os, vars); os << ")"; return;
        case t_div: os << "(/ "; dump_node(n->a, os, vars); os << " "; dump_node(n->b, os, vars); os << ")"; return;
        case t_neg: os << "(neg "; dump_node(n->a, os, vars); os << ")"; return;
        case t_pow: os << "(pow "; dump_node(n->a, os, vars); os << " " << n->ipow << ")"; return;
        case t_sin: os << "(sin "; dump_node(n->a, os, vars); os << ")"; return;
        case t_cos: os << "(cos "; dump_node(n->a, os, vars); os << ")"; return;
        case t_exp: os << "(exp "; dump_node(n->a, os, vars); os << ")"; return;
        case t_flat: {
            os << "(flat [";
            for (std::size_t j = 0; j < n->q.size(); ++j) os << (j ? " " : "") << n->q[j];
            os << "] ";
            dump_node(n->a, os, vars);
            os << ")";
            return;
        }
    }
}

} // namespace

// ---------------------------------------------------------------------------
// Expression

Expression::Expression()
    : root_(mk_const(0.0)),
      vars_(std::make_shared<const std::vector<std::string>>()),
      text_("0") {
    compile();
}

Expression::Expression(NodePtr root, std::shared_ptr<const std::vector<std::string>> vars,
                       std::string text)
    : root_(std::move(root)), vars_(std::move(vars)), text_(std::move(text)) {
    compile();
}

Expression Expression::parse(const std::string& text, const std::vector<std::string>& variables) {
    Parser p{text, variables};
    NodePtr root = p.parse_expr();
    p.skip_ws();
    if (p.pos != text.size()) p.err("trailing input");
    return Expression(std::move(root),
                      std::make_shared<const std::vector<std::string>>(variables), text);
}

Expression Expression::constant(double v) {
    return Expression(mk_const(v), std::make_shared<const std::vector<std::string>>(),
                      std::to_string(v));
}

void Expression::compile() {
    tape_.clear();
    qpolys_.clear();
    // post-order flatten without recursion (explicit stack, second-visit marker)
    std::vector<std::pair<const Node*, bool>> stack{{root_.get(), false}};
    while (!stack.empty()) {
        auto [n, visited] = stack.back();
        stack.pop_back();
        if (!visited) {
            stack.push_back({n, true});
            if (n->b) stack.push_back({n->b.get(), false});
            if (n->a) stack.push_back({n->a.get(), false});
            continue;
        }
        Op op{n->tag, 0, 0.0};
        switch (n->tag) {
            case t_const: op.v = n->value; break;
            case t_var: op.a = n->slot; break;
            case t_pow: op.a = n->ipow; break;
            case t_flat:
                op.a = static_cast<int>(qpolys_.size());
                qpolys_.push_back(n->q);
                break;
            default: break;
        }
        tape_.push_back(op);
    }
}

double Expression::operator()(const double* vars, std::size_t n) const {
    double st[128];
    int top = -1;
    for (const Op& op : tape_) {
        switch (op.tag) {
            case t_const: st[++top] = op.v; break;
            case t_var:
                assert(op.a >= 0 && static_cast<std::size_t>(op.a) < n);
                (void)n;
                st[++top] = vars[op.a];
                break;
            case t_add: --top; st[top] += st[top + 1]; break;
            case t_sub: --top; st[top] -= st[top + 1]; break;
            case t_mul: --top; st[top] *= st[top + 1]; break;
            case t_div: --top; st[top] /= st[top + 1]; break;
            case t_neg: st[top] = -st[top]; break;
            case t_pow: {
                double x = st[top], r = 1.0;
                for (int k = 0; k < op.a; ++k) r *= x;
                st[top] = r;
                break;
            }
            case t_sin: st[top] = std::sin(st[top]); break;
            case t_cos: st[top] = std::cos(st[top]); break;
            case t_exp: st[top] = std::exp(st[top]); break;
            case t_flat: st[top] = flat_eval(qpolys_[op.a], st[top]); break;
        }
        assert(top >= 0 && top < 127);
    }
    assert(top == 0);
    return st[0];
}

Expression Expression::derivative(int slot) const {
    if (slot < 0 || static_cast<std::size_t>(slot) >= vars_->size())
        fail(errkind::ExprParse, "derivative slot out of range");
    return Expression(diff_node(root_, slot), vars_,
                      "d/d" + (*vars_)[slot] + "(" + text_ + ")");
}

Expression Expression::derivative(const std::string& var) const {
    for (std::size_t i = 0; i < vars_->size(); ++i)
        if ((*vars_)[i] == var) return derivative(static_cast<int>(i));
    fail(errkind::ExprParse, "unknown derivative variable '" + var + "'");
}

bool Expression::is_zero() const { return root_->tag == t_const && root_->value == 0.0; }

bool Expression::is_constant(double* value) const {
    if (root_->tag != t_const) return false;
    if (value) *value = root_->value;
    return true;
}

const std::vector<std::string>& Expression::variables() const { return *vars_; }

std::string Expression::dump() const {
    std::ostringstream os;
    dump_node(root_, os, *vars_);
    return os.str();
}

} // namespace thinflow
