#pragma once

// Piecewise-C1 scalar functions with exact breakpoint and sign-change
// bookkeeping: the calculus layer everything else sits on.
//
// A function is a list of closed-form pieces over half-open intervals
// [x_n, x_{n+1}) (value at a breakpoint comes from the right piece),
// optionally 2pi- or P-periodic.  Pieces are expression trees over
// {const, x, +, -, *, unary -, sin, cos, exp}; derivatives are symbolic.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace slowfast {

inline constexpr double tol_root = 1e-10;  // abscissa tolerance for bracketing searches
inline constexpr double tol_quad = 1e-10;  // absolute quadrature tolerance
inline constexpr double inf = std::numeric_limits<double>::infinity();

struct parse_error : std::runtime_error {
    std::size_t pos;
    parse_error(const std::string& what, std::size_t p)
        : std::runtime_error(what + " (at offset " + std::to_string(p) + ")"), pos(p) {}
};

// ---------------------------------------------------------------------------
// Expression trees
// ---------------------------------------------------------------------------

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
    enum class Op : std::uint8_t { constant, var, add, sub, mul, neg, sin, cos, exp };

    Op op = Op::constant;
    double value = 0.0;  // for constant
    ExprPtr a, b;

    static ExprPtr make_const(double v) {
        auto e = std::make_shared<Expr>();
        e->op = Op::constant;
        e->value = v;
        return e;
    }
    static ExprPtr make_var() {
        auto e = std::make_shared<Expr>();
        e->op = Op::var;
        return e;
    }
    static ExprPtr make(Op op, ExprPtr a, ExprPtr b = nullptr) {
        auto e = std::make_shared<Expr>();
        e->op = op;
        e->a = std::move(a);
        e->b = std::move(b);
        return e;
    }

    double eval(double x) const {
        switch (op) {
            case Op::constant: return value;
            case Op::var: return x;
            case Op::add: return a->eval(x) + b->eval(x);
            case Op::sub: return a->eval(x) - b->eval(x);
            case Op::mul: return a->eval(x) * b->eval(x);
            case Op::neg: return -a->eval(x);
            case Op::sin: return std::sin(a->eval(x));
            case Op::cos: return std::cos(a->eval(x));
            case Op::exp: return std::exp(a->eval(x));
        }
        return 0.0;
    }

    ExprPtr derivative() const {
        using enum Op;
        switch (op) {
            case constant: return make_const(0.0);
            case var: return make_const(1.0);
            case add: return make(add, a->derivative(), b->derivative());
            case sub: return make(sub, a->derivative(), b->derivative());
            case mul:
                return make(add, make(mul, a->derivative(), b),
                            make(mul, a, b->derivative()));
            case neg: return make(neg, a->derivative());
            case sin: return make(mul, make(cos, a), a->derivative());
            case cos: return make(neg, make(mul, make(sin, a), a->derivative()));
            case exp: return make(mul, make(exp, a), a->derivative());
        }
        return make_const(0.0);
    }

    // Canonical text form; reparses to a structurally identical tree.
    void print(std::ostream& os, int parent_prec = 0) const {
        const int prec = precedence();
        const bool parens = prec < parent_prec;
        if (parens) os << '(';
        switch (op) {
            case Op::constant: {
                std::ostringstream tmp;
                tmp.precision(17);
                tmp << value;
                std::string s = tmp.str();
                if (value < 0) os << '(' << s << ')';
                else os << s;
                break;
            }
            case Op::var: os << 'x'; break;
            case Op::add: a->print(os, 1); os << '+'; b->print(os, 2); break;
            case Op::sub: a->print(os, 1); os << '-'; b->print(os, 2); break;
            case Op::mul: a->print(os, 3); os << '*'; b->print(os, 3); break;
            case Op::neg: os << '-'; a->print(os, 4); break;
            case Op::sin: os << "sin("; a->print(os, 0); os << ')'; break;
            case Op::cos: os << "cos("; a->print(os, 0); os << ')'; break;
            case Op::exp: os << "exp("; a->print(os, 0); os << ')'; break;
        }
        if (parens) os << ')';
    }

    int precedence() const {
        switch (op) {
            case Op::add:
            case Op::sub: return 1;
            case Op::mul: return 3;
            case Op::neg: return 2;
            default: return 5;
        }
    }

    bool same_as(const Expr& o) const {
        if (op != o.op) return false;
        if (op == Op::constant) return value == o.value;
        if (a && !a->same_as(*o.a)) return false;
        if (b && !b->same_as(*o.b)) return false;
        return true;
    }
};

// One closed-form piece, with its source text kept for round-tripping.
struct PieceExpr {
    ExprPtr root;
    std::string source;

    double operator()(double x) const { return root->eval(x); }

    PieceExpr derivative() const {
        PieceExpr d;
        d.root = root->derivative();
        std::ostringstream os;
        d.root->print(os);
        d.source = os.str();
        return d;
    }

    std::string print() const {
        std::ostringstream os;
        root->print(os);
        return os.str();
    }
};

namespace detail {

// Recursive-descent parser for the expression grammar:
//   expr   := term (('+'|'-') term)*
//   term   := factor ('*' factor)*
//   factor := '-'* atom
//   atom   := NUMBER | 'x' | ('sin'|'cos'|'exp') '(' expr ')' | '(' expr ')'
class ExprParser {
  public:
    ExprParser(const std::string& text, std::size_t base)
        : s_(text), base_(base) {}

    ExprPtr parse() {
        ExprPtr e = expr();
        skip_ws();
        if (pos_ != s_.size()) fail("trailing characters in expression");
        return e;
    }

  private:
    const std::string& s_;
    std::size_t pos_ = 0;
    std::size_t base_;

    [[noreturn]] void fail(const std::string& msg) const {
        throw parse_error(msg, base_ + pos_);
    }
    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool eat(char c) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == c) { ++pos_; return true; }
        return false;
    }

    ExprPtr expr() {
        ExprPtr e = term();
        for (;;) {
            if (eat('+')) e = Expr::make(Expr::Op::add, e, term());
            else if (eat('-')) e = Expr::make(Expr::Op::sub, e, term());
            else return e;
        }
    }
    ExprPtr term() {
        ExprPtr e = factor();
        while (eat('*')) e = Expr::make(Expr::Op::mul, e, factor());
        return e;
    }
    ExprPtr factor() {
        if (eat('-')) return Expr::make(Expr::Op::neg, factor());
        return atom();
    }
    ExprPtr atom() {
        skip_ws();
        if (pos_ >= s_.size()) fail("unexpected end of expression");
        char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            ExprPtr e = expr();
            if (!eat(')')) fail("expected ')'");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::size_t start = pos_;
            while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            std::string name = s_.substr(start, pos_ - start);
            if (name == "x") return Expr::make_var();
            Expr::Op op;
            if (name == "sin") op = Expr::Op::sin;
            else if (name == "cos") op = Expr::Op::cos;
            else if (name == "exp") op = Expr::Op::exp;
            else { pos_ = start; fail("unknown identifier '" + name + "'"); }
            if (!eat('(')) fail("expected '(' after function name");
            ExprPtr arg = expr();
            if (!eat(')')) fail("expected ')'");
            return Expr::make(op, arg);
        }
        fail(std::string("unexpected character '") + c + "'");
    }
    ExprPtr number() {
        std::size_t start = pos_;
        while (pos_ < s_.size() &&
               (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.' ||
                s_[pos_] == 'e' || s_[pos_] == 'E' ||
                ((s_[pos_] == '+' || s_[pos_] == '-') && pos_ > start &&
                 (s_[pos_ - 1] == 'e' || s_[pos_ - 1] == 'E'))))
            ++pos_;
        try {
            std::size_t used = 0;
            double v = std::stod(s_.substr(start, pos_ - start), &used);
            if (used != pos_ - start) { pos_ = start; fail("malformed number"); }
            return Expr::make_const(v);
        } catch (const std::logic_error&) {
            pos_ = start;
            fail("malformed number");
        }
    }
};

inline PieceExpr parse_expr(const std::string& text, std::size_t base_offset = 0) {
    PieceExpr p;
    p.root = ExprParser(text, base_offset).parse();
    p.source = text;
    return p;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sign changes
// ---------------------------------------------------------------------------

struct SignChange {
    enum class Kind : std::uint8_t { simple_zero, jump };
    enum class Direction : std::uint8_t { plus_to_minus, minus_to_plus };

    double x = 0.0;
    Kind kind = Kind::simple_zero;
    Direction direction = Direction::plus_to_minus;
};

// ---------------------------------------------------------------------------
// PiecewiseFunction
// ---------------------------------------------------------------------------

class PiecewiseFunction {
  public:
    // Default: the zero function on the whole line.
    PiecewiseFunction()
        : PiecewiseFunction({}, {PieceExpr{Expr::make_const(0.0), "0"}}) {}

    // Non-periodic: pieces.size() == breakpoints.size() + 1, piece k active on
    // [bp[k-1], bp[k]) with unbounded end pieces.  Periodic: breakpoints lie in
    // (0, P), piece k active on [bp[k-1], bp[k]) within [0, P), arguments
    // reduced mod P.
    PiecewiseFunction(std::vector<double> breakpoints, std::vector<PieceExpr> pieces,
                      bool periodic = false, double period = 0.0)
        : breakpoints_(std::move(breakpoints)),
          pieces_(std::move(pieces)),
          periodic_(periodic),
          period_(period) {
        if (pieces_.empty()) throw std::invalid_argument("piecewise: empty pieces");
        if (pieces_.size() != breakpoints_.size() + 1)
            throw std::invalid_argument("piecewise: pieces count must be intervals count");
        for (std::size_t i = 1; i < breakpoints_.size(); ++i)
            if (!(breakpoints_[i - 1] < breakpoints_[i]))
                throw std::invalid_argument("piecewise: breakpoints not strictly increasing");
        if (periodic_) {
            if (!(period_ > 0)) throw std::invalid_argument("piecewise: period must be positive");
            if (!breakpoints_.empty() &&
                (breakpoints_.front() <= 0.0 || breakpoints_.back() >= period_))
                throw std::invalid_argument("piecewise: breakpoints must lie inside (0, period)");
        }
        derivs_.reserve(pieces_.size());
        for (const auto& p : pieces_) derivs_.push_back(p.derivative());
    }

    bool periodic() const { return periodic_; }
    double period() const { return period_; }
    const std::vector<double>& breakpoints() const { return breakpoints_; }
    const std::vector<PieceExpr>& pieces() const { return pieces_; }

    double domain_lo() const { return domain_lo_; }
    double domain_hi() const { return domain_hi_; }
    void set_domain(double lo, double hi) { domain_lo_ = lo; domain_hi_ = hi; }

    double eval(double x) const {
        check_domain(x);
        double t = reduce(x);
        return pieces_[piece_index(t)](t);
    }
    double operator()(double x) const { return eval(x); }

    // Left limit: value of the piece active just below x.
    double eval_left(double x) const {
        check_domain(x);
        double t = reduce_left(x);
        return pieces_[piece_index_left(t)](t);
    }

    double deriv(double x) const {
        double t = reduce(x);
        return derivs_[piece_index(t)](t);
    }

    // Sampled bounds; pieces are smooth so moderate sampling suffices.
    double sup_abs(double a, double b, int n = 512) const {
        return sampled_sup(a, b, n, [this](double x) { return std::fabs(eval(x)); });
    }
    double sup_abs_deriv(double a, double b, int n = 512) const {
        return sampled_sup(a, b, n, [this](double x) { return std::fabs(deriv(x)); });
    }

    // All breakpoint abscissae in (a, b), periodic copies unrolled.
    std::vector<double> knots(double a, double b) const {
        std::vector<double> out;
        if (!(a < b)) return out;
        if (!periodic_) {
            for (double bp : breakpoints_)
                if (bp > a && bp < b) out.push_back(bp);
            return out;
        }
        // period seam counts as a breakpoint too (piece layout restarts there)
        double k0 = std::floor(a / period_);
        for (double k = k0;; k += 1.0) {
            double base = k * period_;
            if (base > b) break;
            if (base > a && base < b) out.push_back(base);
            for (double bp : breakpoints_) {
                double t = base + bp;
                if (t > a && t < b) out.push_back(t);
            }
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    // Basic well-formedness: |f| and |f'| finite on sampled compacts.
    // Returns human-readable violations (empty when clean).
    std::vector<std::string> validate(double a, double b, int n = 2048) const {
        std::vector<std::string> bad;
        for (int i = 0; i <= n; ++i) {
            double x = a + (b - a) * i / n;
            double v = eval(x), d = deriv(x);
            if (!std::isfinite(v)) { bad.push_back("f not finite at x=" + std::to_string(x)); break; }
            if (!std::isfinite(d)) { bad.push_back("f' not finite at x=" + std::to_string(x)); break; }
        }
        for (const auto& sc : sign_changes(a, b))
            if (sc.kind == SignChange::Kind::simple_zero &&
                std::fabs(deriv(sc.x)) < 1e-8)
                bad.push_back("zero at x=" + std::to_string(sc.x) + " is not simple");
        return bad;
    }

    std::vector<SignChange> sign_changes(double a, double b) const;
    double theta_next(double x, double x_max = inf) const;
    std::string print() const;

  private:
    std::vector<double> breakpoints_;
    std::vector<PieceExpr> pieces_;
    std::vector<PieceExpr> derivs_;
    bool periodic_ = false;
    double period_ = 0.0;
    double domain_lo_ = -inf, domain_hi_ = inf;

    void check_domain(double x) const {
        if (periodic_) return;
        if (x < domain_lo_ || x > domain_hi_)
            throw std::domain_error("piecewise: x=" + std::to_string(x) + " outside domain");
    }
    double reduce(double x) const {
        if (!periodic_) return x;
        double t = std::fmod(x, period_);
        if (t < 0) t += period_;
        return t;
    }
    // Reduction for left limits: x exactly on a seam maps to period (not 0).
    double reduce_left(double x) const {
        if (!periodic_) return x;
        double t = std::fmod(x, period_);
        if (t < 0) t += period_;
        if (t == 0.0) t = period_;
        return t;
    }
    std::size_t piece_index(double t) const {
        auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
        return static_cast<std::size_t>(it - breakpoints_.begin());
    }
    std::size_t piece_index_left(double t) const {
        auto it = std::lower_bound(breakpoints_.begin(), breakpoints_.end(), t);
        return static_cast<std::size_t>(it - breakpoints_.begin());
    }
    template <class F>
    double sampled_sup(double a, double b, int n, F&& g) const {
        double m = 0.0;
        for (int i = 0; i <= n; ++i) m = std::max(m, g(a + (b - a) * i / n));
        return m;
    }
};

// ---------------------------------------------------------------------------
// Grammar:  [periodic=NUMBER ;] clause (';' clause)*
//           clause := 'x<' NUMBER ':' EXPR | 'else:' EXPR | 'all:' EXPR
// ---------------------------------------------------------------------------

inline PiecewiseFunction parse_piecewise(const std::string& spec) {
    struct Clause { std::optional<double> upper; std::string expr_text; std::size_t offset; };
    std::vector<Clause> clauses;
    std::optional<double> period;

    std::size_t start = 0;
    while (start <= spec.size()) {
        std::size_t end = spec.find(';', start);
        if (end == std::string::npos) end = spec.size();
        std::string part = spec.substr(start, end - start);

        auto strip = [](std::string s) {
            std::size_t b = s.find_first_not_of(" \t\r\n");
            std::size_t e = s.find_last_not_of(" \t\r\n");
            return (b == std::string::npos) ? std::string() : s.substr(b, e - b + 1);
        };
        std::string body = strip(part);
        if (!body.empty()) {
            std::size_t lead = part.find_first_not_of(" \t\r\n");
            std::size_t here = start + (lead == std::string::npos ? 0 : lead);
            if (body.rfind("periodic", 0) == 0) {
                std::size_t eq = body.find('=');
                if (eq == std::string::npos) throw parse_error("expected '=' after periodic", here);
                period = std::stod(body.substr(eq + 1));
                if (!clauses.empty()) throw parse_error("periodic header must come first", here);
            } else {
                std::size_t colon = body.find(':');
                if (colon == std::string::npos) throw parse_error("clause missing ':'", here);
                std::string head = strip(body.substr(0, colon));
                std::string expr_text = body.substr(colon + 1);
                Clause c;
                c.expr_text = expr_text;
                c.offset = here + colon + 1;
                if (head == "else" || head == "all") {
                    c.upper = std::nullopt;
                } else if (head.rfind("x<", 0) == 0) {
                    c.upper = std::stod(head.substr(2));
                } else {
                    throw parse_error("clause must start with 'x<NUMBER:', 'else:' or 'all:'", here);
                }
                if ((head == "all") && clauses.size() > 0)
                    throw parse_error("'all' must be the only clause", here);
                clauses.push_back(std::move(c));
            }
        }
        if (end == spec.size()) break;
        start = end + 1;
    }

    if (clauses.empty()) throw parse_error("no clauses", 0);

    std::vector<double> bps;
    std::vector<PieceExpr> pieces;
    for (std::size_t i = 0; i < clauses.size(); ++i) {
        const auto& c = clauses[i];
        bool last = (i + 1 == clauses.size());
        if (!last && !c.upper)
            throw parse_error("only the final clause may be 'else'/'all'", c.offset);
        if (last && c.upper)
            throw parse_error("final clause must be 'else' or 'all'", c.offset);
        if (c.upper) bps.push_back(*c.upper);
        pieces.push_back(detail::parse_expr(c.expr_text, c.offset));
    }
    for (std::size_t i = 1; i < bps.size(); ++i)
        if (!(bps[i - 1] < bps[i]))
            throw parse_error("breakpoints not strictly increasing", clauses[i].offset);

    if (period) return PiecewiseFunction(std::move(bps), std::move(pieces), true, *period);
    return PiecewiseFunction(std::move(bps), std::move(pieces));
}

inline std::string PiecewiseFunction::print() const {
    std::ostringstream os;
    os.precision(17);
    if (periodic_) os << "periodic=" << period_ << " ; ";
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
        if (i) os << " ; ";
        if (i < breakpoints_.size()) os << "x<" << breakpoints_[i] << ": ";
        else if (pieces_.size() == 1) os << "all: ";
        else os << "else: ";
        os << pieces_[i].print();
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Root bracketing and quadrature
// ---------------------------------------------------------------------------

namespace detail {

// Bisection on a bracketing interval, to absolute abscissa tolerance.
template <class F>
double bisect(F&& g, double a, double b, double ga, double gb, double xtol) {
    if (ga == 0.0) return a;
    if (gb == 0.0) return b;
    if ((ga > 0) == (gb > 0)) throw std::runtime_error("bisect: not a bracket");
    while (b - a > xtol) {
        double m = 0.5 * (a + b);
        if (m <= a || m >= b) break;  // hit double resolution
        double gm = g(m);
        if (gm == 0.0) return m;
        if ((gm > 0) == (ga > 0)) { a = m; ga = gm; }
        else { b = m; gb = gm; }
    }
    return 0.5 * (a + b);
}

// Gauss–Kronrod 7/15 on [a,b]; err is the usual |G7-K15| estimate.
template <class F>
double quad_gk15(F&& f, double a, double b, double& err) {
    static const double xk[8] = {
        0.000000000000000, 0.207784955007898, 0.405845151377397, 0.586087235467691,
        0.741531185599394, 0.864864423359769, 0.949107912342759, 0.991455371120813};
    static const double wk[8] = {
        0.209482141084728, 0.204432940075298, 0.190350578064785, 0.169004726639267,
        0.140653259715525, 0.104790010322250, 0.063092092629979, 0.022935322010529};
    static const double wg[4] = {
        0.417959183673469, 0.381830050505119, 0.279705391489277, 0.129484966168870};

    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double fc = f(c);
    double k15 = wk[0] * fc;
    double g7 = wg[0] * fc;
    for (int i = 1; i < 8; ++i) {
        double fi = f(c - h * xk[i]) + f(c + h * xk[i]);
        k15 += wk[i] * fi;
        if (i % 2 == 0) g7 += wg[i / 2] * fi;
    }
    k15 *= h;
    g7 *= h;
    err = std::fabs(k15 - g7);
    return k15;
}

// Adaptive quadrature of a smooth integrand (no interior breakpoints).
template <class F>
double quad_adaptive(F&& f, double a, double b, double abstol) {
    struct Seg { double a, b, val, err; };
    double err0;
    double v0 = quad_gk15(f, a, b, err0);
    std::vector<Seg> segs{{a, b, v0, err0}};
    double total_err = err0;
    int iter = 0;
    while (total_err > abstol && iter++ < 2000) {
        std::size_t worst = 0;
        for (std::size_t i = 1; i < segs.size(); ++i)
            if (segs[i].err > segs[worst].err) worst = i;
        Seg s = segs[worst];
        double m = 0.5 * (s.a + s.b);
        if (m <= s.a || m >= s.b) break;
        double e1, e2;
        double v1 = quad_gk15(f, s.a, m, e1);
        double v2 = quad_gk15(f, m, s.b, e2);
        segs[worst] = {s.a, m, v1, e1};
        segs.push_back({m, s.b, v2, e2});
        total_err += e1 + e2 - s.err;
    }
    double sum = 0.0;
    for (const auto& s : segs) sum += s.val;
    return sum;
}

}  // namespace detail

// Integral of f over [a, b], split exactly at breakpoints.
inline double integrate(const PiecewiseFunction& f, double a, double b,
                        double abstol = tol_quad) {
    if (a == b) return 0.0;
    if (a > b) return -integrate(f, b, a, abstol);
    std::vector<double> cuts = f.knots(a, b);
    cuts.insert(cuts.begin(), a);
    cuts.push_back(b);
    double sum = 0.0;
    double per_span = abstol / static_cast<double>(cuts.size());
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        double lo = cuts[i], hi = cuts[i + 1];
        if (hi <= lo) continue;
        // integrate at the open interior so the half-open convention is moot
        sum += detail::quad_adaptive([&f](double x) { return f.eval(x); }, lo, hi, per_span);
    }
    return sum;
}

// ---------------------------------------------------------------------------
// Sign changes of f on (a, b]
// ---------------------------------------------------------------------------

inline std::vector<SignChange> PiecewiseFunction::sign_changes(double a, double b) const {
    std::vector<SignChange> out;
    if (!(a < b)) return out;

    // Value used for jump classification when the value at a breakpoint
    // vanishes: sample a hair inside the piece (degenerate case, documented).
    auto side_value = [this](double x, bool left) {
        double v = left ? eval_left(x) : eval(x);
        if (std::fabs(v) <= 1e-12) v = left ? eval_left(x - tol_root) : eval(x + tol_root);
        return v;
    };

    std::vector<double> cuts = knots(a, b);

    // jumps live at knots; a knot exactly at b belongs to (a, b] too
    std::vector<double> jump_pts = cuts;
    for (double k : knots(b - tol_root, b + tol_root))
        if (k == b) jump_pts.push_back(b);
    for (double bp : jump_pts) {
        double lv = side_value(bp, true);
        double rv = side_value(bp, false);
        if (lv < 0 && rv > 0)
            out.push_back({bp, SignChange::Kind::jump, SignChange::Direction::minus_to_plus});
        else if (lv > 0 && rv < 0)
            out.push_back({bp, SignChange::Kind::jump, SignChange::Direction::plus_to_minus});
    }

    // interior simple zeros: per smooth span, sample + bracket + bisect
    cuts.insert(cuts.begin(), a);
    cuts.push_back(b);
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        double lo = cuts[i], hi = cuts[i + 1];
        if (hi <= lo) continue;
        int n = std::max(64, static_cast<int>(std::ceil((hi - lo) * 64.0)));
        double margin = std::min(1e-9, (hi - lo) * 1e-6);
        double xprev = lo;
        double vprev = eval(lo);  // right piece: the one active on [lo, hi)
        for (int k = 1; k <= n; ++k) {
            double x = lo + (hi - lo - margin) * k / n;
            double v = eval(x);
            if ((vprev < 0 && v > 0) || (vprev > 0 && v < 0)) {
                double r = detail::bisect([this](double t) { return eval(t); },
                                          xprev, x, vprev, v, tol_root);
                if (r > a && r <= b)
                    out.push_back({r, SignChange::Kind::simple_zero,
                                   vprev > 0 ? SignChange::Direction::plus_to_minus
                                             : SignChange::Direction::minus_to_plus});
            }
            xprev = x;
            vprev = v;
        }
    }

    std::sort(out.begin(), out.end(),
              [](const SignChange& u, const SignChange& v) { return u.x < v.x; });
    return out;
}

inline double PiecewiseFunction::theta_next(double x, double x_max) const {
    double horizon = periodic_ ? 2.0 * period_ : 8.0 * std::acos(-1.0);
    double lo = x;
    double cap = std::min(x_max, periodic_ ? x + 2.0 * period_ + horizon : 1e6);
    while (lo < cap) {
        double hi = std::min(lo + horizon, cap);
        for (const auto& sc : sign_changes(lo, hi))
            if (sc.x > x) return sc.x;
        if (hi >= cap) break;
        lo = hi;
    }
    return inf;
}

// ---------------------------------------------------------------------------
// First level crossing of Phi(x) = ∫_{x0}^{x} f
// ---------------------------------------------------------------------------

struct LevelHit {
    double x = 0.0;      // crossing abscissa
    double level = 0.0;  // which target was hit
    bool touch = false;  // Phi touched the target at a stationary point
};

// Smallest x* in (x0, x_max] with Phi(x*) in `targets`.  Phi is strictly
// monotone between consecutive sign changes of f, so each span is scanned by
// bracketing + bisection; a target equal to Phi at a span end (a sign change,
// where Phi is stationary) is reported as a touch.
inline std::optional<LevelHit> first_level_crossing(const PiecewiseFunction& f, double x0,
                                                    std::vector<double> targets, double x_max) {
    if (!(x0 < x_max)) return std::nullopt;
    std::sort(targets.begin(), targets.end());
    targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
    targets.erase(std::remove_if(targets.begin(), targets.end(),
                                 [](double t) { return !std::isfinite(t); }),
                  targets.end());
    if (targets.empty()) return std::nullopt;

    // Guard zone: when x0 itself sits on a sign change (the usual case for an
    // axis entry), its re-detected position lands within root tolerance of x0
    // and Phi wobbles around 0 there; hits inside the zone are artifacts.
    const double x_guard = x0 + 10.0 * tol_root;

    struct Cut { double x; bool stationary; };  // stationary: f vanishes there
    std::vector<Cut> cuts;
    for (const auto& sc : f.sign_changes(x0, x_max))
        if (sc.x > x_guard)
            cuts.push_back({sc.x, sc.kind == SignChange::Kind::simple_zero});
    for (double k : f.knots(x0, x_max))
        if (k > x_guard) cuts.push_back({k, false});
    cuts.push_back({x_max, false});
    std::sort(cuts.begin(), cuts.end(), [](const Cut& u, const Cut& v) { return u.x < v.x; });
    cuts.erase(std::unique(cuts.begin(), cuts.end(),
                           [](const Cut& u, const Cut& v) { return u.x == v.x; }),
               cuts.end());

    const double touch_eps = 4.0 * tol_quad;
    double a = x0, phi_a = 0.0;
    for (const Cut& cut : cuts) {
        double b = cut.x;
        if (b <= a) continue;
        double phi_b = phi_a + integrate(f, a, b);
        std::optional<LevelHit> best;
        for (double L : targets) {
            // Phi is monotone on the span, so Phi(a)==L (the start level, or a
            // touch already reported) cannot recur strictly inside it.
            double x_hit;
            bool touch = false;
            if (phi_a != L && std::fabs(phi_b - L) <= touch_eps && cut.stationary) {
                // hit sits at the stationary span end to quadrature resolution
                x_hit = b;
                touch = true;
            } else if ((phi_a - L) * (phi_b - L) < 0.0) {
                x_hit = detail::bisect(
                    [&](double t) { return phi_a + integrate(f, a, t) - L; },
                    a, b, phi_a - L, phi_b - L, tol_root);
            } else if (phi_a != L && std::fabs(phi_b - L) <= touch_eps) {
                x_hit = b;
            } else {
                continue;
            }
            if (x_hit <= x_guard) continue;
            if (!best || x_hit < best->x) best = LevelHit{x_hit, L, touch};
        }
        if (best) return best;
        a = b;
        phi_a = phi_b;
    }
    return std::nullopt;
}

}  // namespace slowfast
