#include "value.hpp"

#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>

namespace kfarm {

bool Value::operator==(const Value& other) const {
    return data_ == other.data_;
}

// ---------------------------------------------------------------- printing

std::string format_double(double x) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    (void)ec;
    return std::string(buf, end);
}

static void print_into(const Value& v, std::string& out) {
    if (v.is_integer()) {
        out += std::to_string(v.as_integer());
    } else if (v.is_real()) {
        std::string s = format_double(v.as_real());
        out += s;
        // keep the real/integer distinction through a round trip
        if (s.find_first_of(".eEn") == std::string::npos)
            out += ".0";
    } else if (v.is_text()) {
        out += '"';
        for (char c : v.as_text()) {
            if (c == '"' || c == '\\')
                out += '\\';
            out += c;
        }
        out += '"';
    } else {
        out += '{';
        const auto& items = v.as_list();
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (i)
                out += ", ";
            print_into(items[i], out);
        }
        out += '}';
    }
}

std::string print_value(const Value& v) {
    std::string out;
    print_into(v, out);
    return out;
}

// ----------------------------------------------------------------- parsing

namespace {

class Cursor {
public:
    explicit Cursor(std::string_view text) : text_(text) {}

    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ >= text_.size(); }
    char peek() const { return text_[pos_]; }
    char take() { return text_[pos_++]; }

    void skip_ws() {
        while (!done() && std::isspace(static_cast<unsigned char>(peek())))
            ++pos_;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError(what, pos_);
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

Value parse_one(Cursor& c);

Value parse_number(Cursor& c) {
    std::size_t start = c.pos();
    if (!c.done() && (c.peek() == '+' || c.peek() == '-'))
        c.take();
    bool digits = false, is_real = false;
    while (!c.done() && std::isdigit(static_cast<unsigned char>(c.peek()))) {
        c.take();
        digits = true;
    }
    if (!c.done() && c.peek() == '.') {
        is_real = true;
        c.take();
        while (!c.done() && std::isdigit(static_cast<unsigned char>(c.peek()))) {
            c.take();
            digits = true;
        }
    }
    if (!digits)
        c.fail("malformed number");
    if (!c.done() && (c.peek() == 'e' || c.peek() == 'E')) {
        is_real = true;
        c.take();
        if (!c.done() && (c.peek() == '+' || c.peek() == '-'))
            c.take();
        bool exp_digits = false;
        while (!c.done() && std::isdigit(static_cast<unsigned char>(c.peek()))) {
            c.take();
            exp_digits = true;
        }
        if (!exp_digits)
            c.fail("malformed exponent");
    }
    std::string_view tok = c.text_.substr(start, c.pos() - start);
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    // from_chars rejects a leading '+'
    if (*first == '+')
        ++first;
    if (is_real) {
        double d = 0;
        auto [p, ec] = std::from_chars(first, last, d);
        if (ec != std::errc() || p != last)
            throw ParseError("malformed number", start);
        return Value::real(d);
    }
    std::int64_t i = 0;
    auto [p, ec] = std::from_chars(first, last, i);
    if (ec != std::errc() || p != last)
        throw ParseError("malformed number", start);
    return Value::integer(i);
}

Value parse_string(Cursor& c) {
    c.take(); // opening quote
    std::string out;
    while (true) {
        if (c.done())
            c.fail("unterminated string");
        char ch = c.take();
        if (ch == '"')
            return Value::text(std::move(out));
        if (ch == '\\') {
            if (c.done())
                c.fail("unterminated string");
            char esc = c.take();
            if (esc != '"' && esc != '\\')
                throw ParseError("unsupported escape", c.pos() - 1);
            out += esc;
        } else {
            out += ch;
        }
    }
}

Value parse_list(Cursor& c) {
    c.take(); // '{'
    Value::List items;
    c.skip_ws();
    if (!c.done() && c.peek() == '}') {
        c.take();
        return Value::list(std::move(items));
    }
    while (true) {
        items.push_back(parse_one(c));
        c.skip_ws();
        if (c.done())
            c.fail("unterminated list");
        char ch = c.take();
        if (ch == '}')
            return Value::list(std::move(items));
        if (ch != ',')
            throw ParseError("expected ',' or '}'", c.pos() - 1);
        c.skip_ws();
    }
}

Value parse_one(Cursor& c) {
    c.skip_ws();
    if (c.done())
        c.fail("expected value");
    char ch = c.peek();
    if (ch == '{')
        return parse_list(c);
    if (ch == '"')
        return parse_string(c);
    if (ch == '+' || ch == '-' || ch == '.' ||
        std::isdigit(static_cast<unsigned char>(ch)))
        return parse_number(c);
    c.fail("expected value");
}

} // namespace

Value parse_value(std::string_view text) {
    Cursor c(text);
    Value v = parse_one(c);
    c.skip_ws();
    if (!c.done())
        c.fail("trailing input after value");
    return v;
}

// --------------------------------------------------------------------- env

const Value* Env::find(const std::string& name) const {
    auto it = bindings_.find(name);
    return it == bindings_.end() ? nullptr : &it->second;
}

void Env::bind(std::string name, Value v) {
    bindings_.insert_or_assign(std::move(name), std::move(v));
}

bool is_identifier(std::string_view s) {
    if (s.empty() || !std::isalpha(static_cast<unsigned char>(s[0])))
        return false;
    for (char c : s.substr(1))
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_')
            return false;
    return true;
}

// --------------------------------------------------------------------- rng

Rng Rng::from_entropy() {
    auto now = std::chrono::steady_clock::now().time_since_epoch().count();
    auto wall = std::chrono::system_clock::now().time_since_epoch().count();
    return Rng(static_cast<std::uint64_t>(now) ^
               (static_cast<std::uint64_t>(wall) << 1));
}

std::uint64_t Rng::next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double Rng::next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

// ---------------------------------------------------------- list utilities

Value random_table(std::int64_t times, Rng& rng) {
    if (times <= 0)
        throw Error(Errc::bad_value, "random_table: times must be positive");
    Value::List rows;
    rows.reserve(static_cast<std::size_t>(times));
    for (std::int64_t i = 0; i < times; ++i) {
        double a = rng.next_unit();
        double b = rng.next_unit();
        rows.push_back(Value::list({Value::real(a), Value::real(b)}));
    }
    return Value::list(std::move(rows));
}

Value partition(const Value& list, std::int64_t k) {
    if (!list.is_list())
        throw Error(Errc::bad_value, "partition: input is not a list");
    if (k <= 0)
        throw Error(Errc::bad_value, "partition: k must be positive");
    const auto& items = list.as_list();
    if (items.size() % static_cast<std::size_t>(k) != 0)
        throw Error(Errc::bad_value,
                    "partition: length " + std::to_string(items.size()) +
                        " not divisible by " + std::to_string(k));
    Value::List out;
    out.reserve(items.size() / static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < items.size(); i += static_cast<std::size_t>(k)) {
        Value::List row(items.begin() + static_cast<std::ptrdiff_t>(i),
                        items.begin() + static_cast<std::ptrdiff_t>(i + k));
        out.push_back(Value::list(std::move(row)));
    }
    return Value::list(std::move(out));
}

static void flatten_into(const Value& v, Value::List& out) {
    if (v.is_list())
        for (const auto& item : v.as_list())
            flatten_into(item, out);
    else
        out.push_back(v);
}

Value flatten(const Value& v) {
    Value::List out;
    flatten_into(v, out);
    return Value::list(std::move(out));
}

Value chop(const Value& v, double tol) {
    if (tol < 0)
        throw Error(Errc::bad_value, "chop: tolerance must be nonnegative");
    if (v.is_real())
        return std::fabs(v.as_real()) < tol ? Value::integer(0) : v;
    if (v.is_integer())
        return v;
    if (v.is_list()) {
        Value::List out;
        out.reserve(v.as_list().size());
        for (const auto& item : v.as_list())
            out.push_back(chop(item, tol));
        return Value::list(std::move(out));
    }
    throw Error(Errc::bad_value, "chop: non-numeric leaf");
}

bool is_matrix_value(const Value& v) {
    if (!v.is_list() || v.as_list().empty())
        return false;
    std::size_t cols = 0;
    bool first = true;
    for (const auto& row : v.as_list()) {
        if (!row.is_list() || row.as_list().empty())
            return false;
        if (first) {
            cols = row.as_list().size();
            first = false;
        } else if (row.as_list().size() != cols) {
            return false;
        }
        for (const auto& cell : row.as_list())
            if (!cell.is_number())
                return false;
    }
    return true;
}

} // namespace kfarm
