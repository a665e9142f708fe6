#include "polcpmg/sequences.hpp"

#include "polcpmg/units.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

namespace polcpmg {

SequenceParseError::SequenceParseError(const std::string& msg, int line, int column)
    : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + msg),
      line_(line),
      column_(column) {}

namespace {

enum class Tok { Word, LBrace, RBrace, Sep, End };

struct Token {
  Tok kind;
  std::string text;
  int line;
  int column;
};

std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  int line = 1, col = 1;
  std::size_t i = 0;
  auto advance = [&] {
    if (src[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
    ++i;
  };
  while (i < src.size()) {
    const char c = src[i];
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') advance();
    } else if (c == '\n' || c == ';') {
      out.push_back({Tok::Sep, std::string(1, c), line, col});
      advance();
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      advance();
    } else if (c == '{') {
      out.push_back({Tok::LBrace, "{", line, col});
      advance();
    } else if (c == '}') {
      out.push_back({Tok::RBrace, "}", line, col});
      advance();
    } else {
      Token t{Tok::Word, {}, line, col};
      while (i < src.size() && !std::isspace(static_cast<unsigned char>(src[i])) && src[i] != ';' &&
             src[i] != '{' && src[i] != '}' && src[i] != '#') {
        t.text.push_back(src[i]);
        advance();
      }
      out.push_back(std::move(t));
    }
  }
  out.push_back({Tok::End, "", line, col});
  return out;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  PulseSequence parse() {
    PulseSequence seq;
    statements(seq.segments, /*nested=*/false);
    return seq;
  }

 private:
  std::vector<Token> toks_;
  std::size_t pos_ = 0;

  const Token& peek() const { return toks_[pos_]; }
  const Token& next() { return toks_[pos_++]; }

  [[noreturn]] void fail(const Token& t, const std::string& msg) const {
    throw SequenceParseError(msg, t.line, t.column);
  }

  void statements(std::vector<Segment>& out, bool nested) {
    for (;;) {
      const Token& t = peek();
      if (t.kind == Tok::Sep) {
        next();
        continue;
      }
      if (t.kind == Tok::End) {
        if (nested) fail(t, "unterminated repeat block (missing '}')");
        return;
      }
      if (t.kind == Tok::RBrace) {
        if (!nested) fail(t, "unexpected '}'");
        return;
      }
      if (t.kind == Tok::LBrace) fail(t, "unexpected '{'");
      statement(out);
      const Token& end = peek();
      if (end.kind != Tok::Sep && end.kind != Tok::End && end.kind != Tok::RBrace)
        fail(end, "expected ';' or newline before '" + end.text + "'");
    }
  }

  void statement(std::vector<Segment>& out) {
    const Token& kw = next();
    if (kw.text == "wait") {
      out.push_back(Segment::wait(duration(next())));
    } else if (kw.text == "pulse") {
      const Token& ax = next();
      double phase = 0.0;
      if (ax.text == "x")
        phase = 0.0;
      else if (ax.text == "y")
        phase = units::kPi / 2.0;
      else
        fail(ax, "pulse axis must be 'x' or 'y', got '" + ax.text + "'");
      const Token& q = next();
      auto [value, unit] = quantity(q);
      if (unit == "deg") {
        out.push_back(Segment::kick(units::deg(value), phase));
        return;
      }
      const double t = to_seconds(q, value, unit);
      std::optional<double> rabi;
      if (peek().kind == Tok::Word && peek().text == "rabi") {
        next();
        const Token& rq = next();
        auto [f, funit] = quantity(rq);
        if (!(f > 0.0)) fail(rq, "Rabi frequency must be > 0");
        if (funit == "MHz")
          rabi = units::mhz(f);
        else if (funit == "kHz")
          rabi = units::khz(f);
        else
          fail(rq, "Rabi frequency unit must be MHz or kHz");
      }
      out.push_back(Segment::pulse(t, phase, rabi));
    } else if (kw.text == "repeat") {
      const Token& nt = next();
      int n = 0;
      auto [p, ec] = std::from_chars(nt.text.data(), nt.text.data() + nt.text.size(), n);
      if (nt.kind != Tok::Word || ec != std::errc() || p != nt.text.data() + nt.text.size())
        fail(nt, "repeat count must be an integer");
      if (n < 0) fail(nt, "repeat count must be >= 0");
      const Token& lb = next();
      if (lb.kind != Tok::LBrace) fail(lb, "expected '{' after repeat count");
      std::vector<Segment> body;
      statements(body, /*nested=*/true);
      next();  // '}'
      for (int i = 0; i < n; ++i) out.insert(out.end(), body.begin(), body.end());
    } else if (kw.kind == Tok::Word) {
      fail(kw, "unknown directive '" + kw.text + "'");
    } else {
      fail(kw, "expected a directive");
    }
  }

  std::pair<double, std::string> quantity(const Token& t) {
    if (t.kind != Tok::Word) fail(t, "expected a quantity such as 40ns");
    const char* b = t.text.data();
    const char* e = b + t.text.size();
    double v = 0.0;
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || !std::isfinite(v)) fail(t, "malformed number in '" + t.text + "'");
    std::string unit(p, e);
    if (unit.empty()) {
      // allow "40 ns"
      if (peek().kind == Tok::Word) unit = next().text;
      else fail(t, "missing unit after '" + t.text + "'");
    }
    return {v, unit};
  }

  double to_seconds(const Token& t, double v, const std::string& unit) {
    if (v < 0.0) fail(t, "negative duration '" + t.text + "'");
    if (unit == "ns") return units::ns(v);
    if (unit == "us") return units::us(v);
    fail(t, "unknown time unit '" + unit + "' (expected ns or us)");
  }

  double duration(const Token& t) {
    auto [v, unit] = quantity(t);
    return to_seconds(t, v, unit);
  }
};

std::string shortest(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw SequenceError("number formatting failed");
  return std::string(buf, p);
}

const char* axis_name(double phase) {
  if (phase == 0.0) return "x";
  if (phase == units::kPi / 2.0) return "y";
  throw SequenceError("segment phase " + shortest(phase) + " rad has no text form (only x and y axes)");
}

bool close(double a, double b, double rel) {
  return a == b || std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b));
}

}  // namespace

PulseSequence parse_sequence(std::string_view text) {
  Parser p(tokenize(text));
  PulseSequence seq = p.parse();
  if (seq.segments.empty()) throw SequenceParseError("sequence contains no segments", 1, 1);
  return seq;
}

std::string serialize_sequence(const PulseSequence& seq) {
  std::ostringstream os;
  for (const auto& s : seq.segments) {
    if (s.is_kick()) {
      os << "pulse " << axis_name(s.phase) << ' ' << shortest(units::to_deg(*s.kick_angle)) << "deg\n";
    } else if (s.drive_on) {
      os << "pulse " << axis_name(s.phase) << ' ' << shortest(units::to_ns(s.duration)) << "ns";
      if (s.rabi) os << " rabi " << shortest(units::to_mhz(*s.rabi)) << "MHz";
      os << '\n';
    } else {
      os << "wait " << shortest(units::to_ns(s.duration)) << "ns\n";
    }
  }
  return os.str();
}

bool segments_equal(const Segment& a, const Segment& b, double rel_tol) {
  if (a.drive_on != b.drive_on || a.is_kick() != b.is_kick()) return false;
  if (!close(a.duration, b.duration, rel_tol)) return false;
  if (!a.drive_on) return true;
  if (!close(a.phase, b.phase, rel_tol)) return false;
  if (a.rabi.has_value() != b.rabi.has_value()) return false;
  if (a.rabi && !close(*a.rabi, *b.rabi, rel_tol)) return false;
  if (a.is_kick() && !close(*a.kick_angle, *b.kick_angle, rel_tol)) return false;
  return true;
}

}  // namespace polcpmg
