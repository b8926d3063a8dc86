#pragma once

#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace thinflow {

namespace detail { struct ExprNode; }

/// Small symbolic expression type used for all user-supplied data: boundary
/// sources, Dirichlet signals, velocity profiles. Supports exact (symbolic)
/// differentiation, which the asymptotic construction leans on heavily —
/// time derivatives of data must be spectrally clean, not finite-differenced.
///
/// Grammar (parsed with bound variable names, e.g. {"theta","x","t"}):
///   expr   := term (('+'|'-') term)*
///   term   := unary (('*'|'/') unary)*
///   unary  := '-' unary | power
///   power  := atom ('^' nonneg-integer)?
///   atom   := number | 'pi' | var | fn '(' expr {',' expr} ')' | '(' expr ')'
///   fn     := sin | cos | exp | ramp | smoothstep | bump
///
/// ramp(u) = exp(-1/u) for u > 0, else 0 — C-infinity and flat at u = 0, so any
/// signal built from it matches arbitrarily many vanishing time derivatives at
/// t = 0 *exactly*. The family Q(1/u)·exp(-1/u) is closed under d/du, so
/// symbolic derivatives stay in closed form. smoothstep(u) is the normalized
/// ramp pair (0 for u<=0, 1 for u>=1); bump(x,a,b) is the unit bump on (a,b).
class Expression {
public:
    Expression();  // the zero expression with no variables

    static Expression parse(const std::string& text, const std::vector<std::string>& variables);
    static Expression constant(double v);

    double operator()(const double* vars, std::size_t n) const;
    double operator()(std::initializer_list<double> vars) const {
        return (*this)(vars.begin(), vars.size());
    }

    /// exact partial derivative; variable must be one of the bound names
    Expression derivative(const std::string& var) const;
    Expression derivative(int slot) const;

    bool is_zero() const;                  // structurally zero after folding
    bool is_constant(double* value = nullptr) const;
    const std::vector<std::string>& variables() const;
    const std::string& source() const { return text_; }
    std::string dump() const;              // debug s-expression

private:
    using NodePtr = std::shared_ptr<const detail::ExprNode>;

    struct Op {                            // postfix tape instruction
        int tag;
        int a;                             // var slot / pow exponent / qpoly index
        double v;                          // constant payload
    };

    Expression(NodePtr root, std::shared_ptr<const std::vector<std::string>> vars, std::string text);
    void compile();

    NodePtr root_;
    std::shared_ptr<const std::vector<std::string>> vars_;
    std::string text_;
    std::vector<Op> tape_;
    std::vector<std::vector<double>> qpolys_;
};

} // namespace thinflow
