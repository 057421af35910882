#pragma once

// Bounded-time signal temporal logic over uniformly sampled traces.
//
// Grammar (lowest to highest precedence):
//
//   formula  := or ( "->" formula )?
//   or       := and ( "||" and )*
//   and      := since ( "&&" since )*
//   since    := unary ( "S" unary )*
//   unary    := "!" unary
//             | ("G" | "F") "[" number "," number "]" unary
//             | "(" formula ")"
//             | atom
//   atom     := ident ( cmp operand )?        bare ident: signal != 0
//   cmp      := "<" | "<=" | ">" | ">=" | "=" | "=="
//   operand  := number | "?" ident | ident    ?name: learnable slot,
//                                             ident: named constant
//
// Interval bounds are in time units and map onto samples inclusively:
// [ceil(a/dt), floor(b/dt)]. Windows are truncated at the end of the
// trace; an empty window makes G true and F false. Since is unbounded:
// (a S b) holds at t iff b held at some t' <= t and a held on (t', t].

#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace apsmon::stl {

enum class Cmp { Lt, Le, Gt, Ge, Eq };

inline std::string_view to_string(Cmp c) {
  switch (c) {
    case Cmp::Lt: return "<";
    case Cmp::Le: return "<=";
    case Cmp::Gt: return ">";
    case Cmp::Ge: return ">=";
    case Cmp::Eq: return "=";
  }
  return "?";
}

/// Named threshold: a learnable slot (?b1) or a bound constant (BGT).
struct Param {
  std::string name;
  bool slot = false;
  friend bool operator==(const Param&, const Param&) = default;
};

using Threshold = std::variant<double, Param>;

enum class Op { Atom, Prop, Not, And, Or, Implies, Globally, Eventually, Since };

struct Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

struct Formula {
  Op op = Op::Prop;
  std::string signal;             // Atom, Prop
  Cmp cmp = Cmp::Gt;              // Atom
  Threshold threshold = 0.0;      // Atom
  double lo = 0.0, hi = 0.0;      // Globally, Eventually
  std::vector<FormulaPtr> args;   // Not: 1, binary: 2 (Since: lhs S rhs)
};

bool operator==(const Formula& a, const Formula& b);

inline bool same(const FormulaPtr& a, const FormulaPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  return *a == *b;
}

inline bool operator==(const Formula& a, const Formula& b) {
  if (a.op != b.op || a.args.size() != b.args.size()) return false;
  switch (a.op) {
    case Op::Atom:
      if (a.signal != b.signal || a.cmp != b.cmp || !(a.threshold == b.threshold)) return false;
      break;
    case Op::Prop:
      if (a.signal != b.signal) return false;
      break;
    case Op::Globally:
    case Op::Eventually:
      if (a.lo != b.lo || a.hi != b.hi) return false;
      break;
    default: break;
  }
  for (std::size_t i = 0; i < a.args.size(); ++i) {
    if (!same(a.args[i], b.args[i])) return false;
  }
  return true;
}

// Builders.
inline FormulaPtr atom(std::string signal, Cmp cmp, Threshold th) {
  auto f = std::make_shared<Formula>();
  f->op = Op::Atom;
  f->signal = std::move(signal);
  f->cmp = cmp;
  f->threshold = std::move(th);
  return f;
}
inline FormulaPtr prop(std::string signal) {
  auto f = std::make_shared<Formula>();
  f->op = Op::Prop;
  f->signal = std::move(signal);
  return f;
}
inline FormulaPtr unary(Op op, FormulaPtr a, double lo = 0.0, double hi = 0.0) {
  auto f = std::make_shared<Formula>();
  f->op = op;
  f->lo = lo;
  f->hi = hi;
  f->args = {std::move(a)};
  return f;
}
inline FormulaPtr binary(Op op, FormulaPtr a, FormulaPtr b) {
  auto f = std::make_shared<Formula>();
  f->op = op;
  f->args = {std::move(a), std::move(b)};
  return f;
}
inline FormulaPtr negate(FormulaPtr a) { return unary(Op::Not, std::move(a)); }
inline FormulaPtr conj(FormulaPtr a, FormulaPtr b) { return binary(Op::And, std::move(a), std::move(b)); }
inline FormulaPtr disj(FormulaPtr a, FormulaPtr b) { return binary(Op::Or, std::move(a), std::move(b)); }
inline FormulaPtr implies(FormulaPtr a, FormulaPtr b) { return binary(Op::Implies, std::move(a), std::move(b)); }
inline FormulaPtr since(FormulaPtr a, FormulaPtr b) { return binary(Op::Since, std::move(a), std::move(b)); }
inline FormulaPtr globally(double lo, double hi, FormulaPtr a) {
  if (!(lo >= 0.0 && lo <= hi)) throw std::invalid_argument("interval requires 0 <= a <= b");
  return unary(Op::Globally, std::move(a), lo, hi);
}
inline FormulaPtr eventually(double lo, double hi, FormulaPtr a) {
  if (!(lo >= 0.0 && lo <= hi)) throw std::invalid_argument("interval requires 0 <= a <= b");
  return unary(Op::Eventually, std::move(a), lo, hi);
}

// ---------------------------------------------------------------------------
// Printing

inline std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace detail {
inline bool is_binary(Op op) {
  return op == Op::And || op == Op::Or || op == Op::Implies || op == Op::Since;
}
inline void print(const Formula& f, std::string& out);
inline void print_child(const FormulaPtr& c, std::string& out) {
  if (is_binary(c->op)) {
    out += '(';
    print(*c, out);
    out += ')';
  } else {
    print(*c, out);
  }
}
inline void print(const Formula& f, std::string& out) {
  switch (f.op) {
    case Op::Atom:
      out += f.signal;
      out += ' ';
      out += to_string(f.cmp);
      out += ' ';
      if (const auto* v = std::get_if<double>(&f.threshold)) {
        out += format_number(*v);
      } else {
        const auto& p = std::get<Param>(f.threshold);
        if (p.slot) out += '?';
        out += p.name;
      }
      return;
    case Op::Prop: out += f.signal; return;
    case Op::Not:
      out += '!';
      print_child(f.args[0], out);
      return;
    case Op::Globally:
    case Op::Eventually: {
      out += f.op == Op::Globally ? "G[" : "F[";
      out += format_number(f.lo);
      out += ',';
      out += format_number(f.hi);
      out += ']';
      // Wrap the body so "G[0,1] a -> b" never re-parses differently.
      out += '(';
      print(*f.args[0], out);
      out += ')';
      return;
    }
    default: {
      const char* sym = f.op == Op::And ? " && " : f.op == Op::Or ? " || "
                        : f.op == Op::Implies ? " -> " : " S ";
      print_child(f.args[0], out);
      out += sym;
      print_child(f.args[1], out);
      return;
    }
  }
}
}  // namespace detail

inline std::string to_string(const Formula& f) {
  std::string out;
  detail::print(f, out);
  return out;
}
inline std::string to_string(const FormulaPtr& f) { return to_string(*f); }

// ---------------------------------------------------------------------------
// Parsing

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, int line, int column)
      : std::runtime_error("line " + std::to_string(line) + ", column " +
                           std::to_string(column) + ": " + msg),
        message_(msg), line_(line), column_(column) {}
  const std::string& message() const { return message_; }
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  std::string message_;
  int line_;
  int column_;
};

namespace detail {

class Parser {
 public:
  Parser(std::string_view text, const std::vector<std::string>* signals)
      : text_(text), signals_(signals) {}

  FormulaPtr parse_all() {
    FormulaPtr f = parse_formula();
    skip_ws();
    if (pos_ < text_.size()) fail("unexpected trailing input");
    return f;
  }

 private:
  std::string_view text_;
  const std::vector<std::string>* signals_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& msg) const { fail_at(msg, pos_); }
  [[noreturn]] void fail_at(const std::string& msg, std::size_t at) const {
    int line = 1, col = 1;
    for (std::size_t i = 0; i < at && i < text_.size(); ++i) {
      if (text_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(msg, line, col);
  }

  void skip_ws() {
    while (pos_ < text_.size() &&
           (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' ||
            text_[pos_] == '\r')) {
      ++pos_;
    }
  }
  bool peek(std::string_view tok) {
    skip_ws();
    return text_.substr(pos_, tok.size()) == tok;
  }
  bool accept(std::string_view tok) {
    if (peek(tok)) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }
  void expect(std::string_view tok) {
    if (!accept(tok)) fail("expected '" + std::string(tok) + "'");
  }
  static bool ident_start(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
  }
  static bool ident_char(char c) { return ident_start(c) || (c >= '0' && c <= '9'); }

  // Keyword G/F/S only when not followed by an identifier character.
  bool peek_keyword(char kw) {
    skip_ws();
    return pos_ < text_.size() && text_[pos_] == kw &&
           (pos_ + 1 >= text_.size() || !ident_char(text_[pos_ + 1]));
  }

  std::string ident() {
    skip_ws();
    const std::size_t start = pos_;
    if (pos_ >= text_.size() || !ident_start(text_[pos_])) fail("expected identifier");
    while (pos_ < text_.size() && ident_char(text_[pos_])) ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  double number() {
    skip_ws();
    const std::size_t start = pos_;
    bool neg = false;
    if (pos_ < text_.size() && (text_[pos_] == '-' || text_[pos_] == '+')) {
      neg = text_[pos_] == '-';
      ++pos_;
    }
    if (text_.substr(pos_, 3) == "inf") {
      pos_ += 3;
      return neg ? -std::numeric_limits<double>::infinity()
                 : std::numeric_limits<double>::infinity();
    }
    double v = 0.0;
    const char* first = text_.data() + pos_;
    auto res = std::from_chars(first, text_.data() + text_.size(), v);
    if (res.ec != std::errc() || res.ptr == first) fail_at("expected number", start);
    pos_ += static_cast<std::size_t>(res.ptr - first);
    return neg ? -v : v;
  }

  FormulaPtr parse_formula() {
    FormulaPtr lhs = parse_or();
    if (accept("->")) return implies(lhs, parse_formula());
    return lhs;
  }
  FormulaPtr parse_or() {
    FormulaPtr lhs = parse_and();
    while (accept("||")) lhs = disj(lhs, parse_and());
    return lhs;
  }
  FormulaPtr parse_and() {
    FormulaPtr lhs = parse_since();
    while (accept("&&")) lhs = conj(lhs, parse_since());
    return lhs;
  }
  FormulaPtr parse_since() {
    FormulaPtr lhs = parse_unary();
    while (peek_keyword('S')) {
      ++pos_;
      lhs = since(lhs, parse_unary());
    }
    return lhs;
  }
  FormulaPtr parse_unary() {
    skip_ws();
    if (accept("!")) return negate(parse_unary());
    if (peek_keyword('G') || peek_keyword('F')) {
      const bool g = text_[pos_] == 'G';
      ++pos_;
      expect("[");
      const std::size_t at = pos_;
      const double lo = number();
      expect(",");
      const double hi = number();
      expect("]");
      if (!(lo >= 0.0 && lo <= hi)) fail_at("interval requires 0 <= a <= b", at);
      FormulaPtr body = parse_unary();
      return g ? globally(lo, hi, body) : eventually(lo, hi, body);
    }
    if (accept("(")) {
      FormulaPtr f = parse_formula();
      expect(")");
      return f;
    }
    return parse_atom();
  }
  FormulaPtr parse_atom() {
    skip_ws();
    const std::size_t at = pos_;
    std::string name = ident();
    if (signals_ != nullptr) {
      bool known = false;
      for (const auto& s : *signals_) known = known || s == name;
      if (!known) fail_at("unknown signal '" + name + "'", at);
    }
    Cmp cmp;
    if (accept("<=")) cmp = Cmp::Le;
    else if (accept(">=")) cmp = Cmp::Ge;
    else if (accept("==")) cmp = Cmp::Eq;
    else if (peek("->")) return prop(std::move(name));
    else if (accept("<")) cmp = Cmp::Lt;
    else if (accept(">")) cmp = Cmp::Gt;
    else if (accept("=")) cmp = Cmp::Eq;
    else return prop(std::move(name));
    skip_ws();
    if (accept("?")) return atom(std::move(name), cmp, Param{ident(), true});
    if (pos_ < text_.size() && ident_start(text_[pos_]) && text_.substr(pos_, 3) != "inf") {
      return atom(std::move(name), cmp, Param{ident(), false});
    }
    return atom(std::move(name), cmp, number());
  }
};

}  // namespace detail

/// Parses one formula. When `signals` is given, atoms over other names are
/// rejected.
inline FormulaPtr parse(std::string_view text,
                        const std::vector<std::string>* signals = nullptr) {
  return detail::Parser(text, signals).parse_all();
}

struct RuleLine {
  int line = 0;
  FormulaPtr formula;
};

/// Rule file: one formula per line; '#' starts a comment.
inline std::vector<RuleLine> parse_rule_file(std::string_view text,
                                             const std::vector<std::string>* signals = nullptr) {
  std::vector<RuleLine> out;
  int line = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    ++line;
    std::string_view l = text.substr(pos, end - pos);
    if (auto hash = l.find('#'); hash != std::string_view::npos) l = l.substr(0, hash);
    if (l.find_first_not_of(" \t\r") != std::string_view::npos) {
      try {
        out.push_back({line, parse(l, signals)});
      } catch (const ParseError& e) {
        throw ParseError(e.message(), line, e.column());
      }
    }
    if (end == text.size()) break;
    pos = end + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

/// Named signals on a shared uniform time grid.
struct SignalTrace {
  double dt = 1.0;
  std::map<std::string, std::vector<double>> signals;

  std::size_t length() const { return signals.empty() ? 0 : signals.begin()->second.size(); }

  const std::vector<double>& at(const std::string& name) const {
    auto it = signals.find(name);
    if (it == signals.end()) throw std::invalid_argument("unknown signal '" + name + "'");
    return it->second;
  }

  void validate() const {
    if (!(dt > 0.0)) throw std::invalid_argument("signal trace dt must be > 0");
    for (const auto& [name, v] : signals) {
      if (v.size() != length()) {
        throw std::invalid_argument("signal '" + name + "' length differs");
      }
    }
  }
};

using Bindings = std::map<std::string, double>;

class UnresolvedSlot : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double resolve(const Threshold& th, const Bindings& b) {
  if (const auto* v = std::get_if<double>(&th)) return *v;
  const auto& p = std::get<Param>(th);
  auto it = b.find(p.name);
  if (it == b.end()) throw UnresolvedSlot("unresolved threshold '" + p.name + "'");
  return it->second;
}

inline bool compare(double value, Cmp cmp, double threshold) {
  switch (cmp) {
    case Cmp::Lt: return value < threshold;
    case Cmp::Le: return value <= threshold;
    case Cmp::Gt: return value > threshold;
    case Cmp::Ge: return value >= threshold;
    case Cmp::Eq: return value == threshold;
  }
  return false;
}

/// Signed margin of an ordering atom: mu - beta for > and >=, beta - mu for
/// < and <=. A zero margin satisfies the non-strict comparators only.
inline double robustness(const Formula& a, const SignalTrace& trace, std::size_t t,
                         const Bindings& b = {}) {
  if (a.op != Op::Atom) throw std::invalid_argument("robustness: atom required");
  if (a.cmp == Cmp::Eq) {
    throw std::invalid_argument(
        "robustness: equality atoms are boolean-only; use eval_bool");
  }
  const double mu = trace.at(a.signal).at(t);
  const double beta = resolve(a.threshold, b);
  return (a.cmp == Cmp::Gt || a.cmp == Cmp::Ge) ? mu - beta : beta - mu;
}

namespace detail {

inline std::pair<long, long> sample_window(double lo, double hi, double dt) {
  const long a = static_cast<long>(std::ceil(lo / dt - 1e-9));
  const long b = static_cast<long>(std::floor(hi / dt + 1e-9));
  return {a, b};
}

inline std::vector<char> eval_series(const Formula& f, const SignalTrace& tr,
                                     const Bindings& b) {
  const std::size_t n = tr.length();
  std::vector<char> out(n, 0);
  switch (f.op) {
    case Op::Atom: {
      const auto& s = tr.at(f.signal);
      const double th = resolve(f.threshold, b);
      for (std::size_t t = 0; t < n; ++t) out[t] = compare(s[t], f.cmp, th);
      break;
    }
    case Op::Prop: {
      const auto& s = tr.at(f.signal);
      for (std::size_t t = 0; t < n; ++t) out[t] = s[t] != 0.0;
      break;
    }
    case Op::Not: {
      out = eval_series(*f.args[0], tr, b);
      for (auto& v : out) v = !v;
      break;
    }
    case Op::And:
    case Op::Or:
    case Op::Implies: {
      const auto x = eval_series(*f.args[0], tr, b);
      const auto y = eval_series(*f.args[1], tr, b);
      for (std::size_t t = 0; t < n; ++t) {
        out[t] = f.op == Op::And ? (x[t] && y[t])
                 : f.op == Op::Or ? (x[t] || y[t])
                                  : (!x[t] || y[t]);
      }
      break;
    }
    case Op::Since: {
      const auto x = eval_series(*f.args[0], tr, b);
      const auto y = eval_series(*f.args[1], tr, b);
      bool held = false;
      for (std::size_t t = 0; t < n; ++t) {
        held = y[t] || (x[t] && held);
        out[t] = held;
      }
      break;
    }
    case Op::Globally:
    case Op::Eventually: {
      const auto x = eval_series(*f.args[0], tr, b);
      const auto [a, w] = sample_window(f.lo, f.hi, tr.dt);
      // prefix[i] = number of true samples in [0, i)
      std::vector<long> prefix(n + 1, 0);
      for (std::size_t t = 0; t < n; ++t) prefix[t + 1] = prefix[t] + (x[t] ? 1 : 0);
      const bool g = f.op == Op::Globally;
      for (std::size_t t = 0; t < n; ++t) {
        const long lo = static_cast<long>(t) + a;
        const long hi = std::min(static_cast<long>(t) + w, static_cast<long>(n) - 1);
        if (lo > hi) {
          out[t] = g;
          continue;
        }
        const long trues = prefix[hi + 1] - prefix[lo];
        out[t] = g ? trues == hi - lo + 1 : trues > 0;
      }
      break;
    }
  }
  return out;
}

}  // namespace detail

/// Satisfaction at every sample.
inline std::vector<char> eval_series(const Formula& f, const SignalTrace& trace,
                                     const Bindings& b = {}) {
  return detail::eval_series(f, trace, b);
}

inline bool eval_bool(const Formula& f, const SignalTrace& trace, std::size_t t,
                      const Bindings& b = {}) {
  if (t >= trace.length()) throw std::out_of_range("eval_bool: t outside trace");
  return detail::eval_series(f, trace, b)[t] != 0;
}

/// Names of every Param (slots and constants) referenced by a formula.
inline void collect_params(const Formula& f, std::vector<Param>& out) {
  if (f.op == Op::Atom) {
    if (const auto* p = std::get_if<Param>(&f.threshold)) {
      bool seen = false;
      for (const auto& q : out) seen = seen || q == *p;
      if (!seen) out.push_back(*p);
    }
  }
  for (const auto& a : f.args) collect_params(*a, out);
}

}  // namespace apsmon::stl
