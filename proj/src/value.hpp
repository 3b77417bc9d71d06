#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "error.hpp"

namespace kfarm {

// The universal datum: a real, an integer, a string, or a nested list.
// Values are immutable once built and cheap enough to copy at our scale;
// the same canonical text form is used on the wire, in files and on stdout.
class Value {
public:
    using List = std::vector<Value>;

    Value() : data_(std::int64_t{0}) {}
    explicit Value(double r) : data_(r) {}
    explicit Value(std::int64_t i) : data_(i) {}
    explicit Value(std::string s) : data_(std::move(s)) {}
    explicit Value(List l) : data_(std::move(l)) {}

    static Value real(double r) { return Value(r); }
    static Value integer(std::int64_t i) { return Value(i); }
    static Value text(std::string s) { return Value(std::move(s)); }
    static Value list(List l) { return Value(std::move(l)); }

    bool is_real() const { return std::holds_alternative<double>(data_); }
    bool is_integer() const { return std::holds_alternative<std::int64_t>(data_); }
    bool is_text() const { return std::holds_alternative<std::string>(data_); }
    bool is_list() const { return std::holds_alternative<List>(data_); }
    bool is_number() const { return is_real() || is_integer(); }

    double as_real() const { return std::get<double>(data_); }
    std::int64_t as_integer() const { return std::get<std::int64_t>(data_); }
    const std::string& as_text() const { return std::get<std::string>(data_); }
    const List& as_list() const { return std::get<List>(data_); }

    // Numeric view: integers widen to double.
    double number() const {
        return is_integer() ? static_cast<double>(as_integer()) : as_real();
    }

    bool operator==(const Value& other) const;

private:
    std::variant<double, std::int64_t, std::string, List> data_;
};

// Grammar: value := real | int | string | '{' [value (',' value)*] '}'
// Whitespace between tokens is ignored; the only string escapes are \" and \\.
Value parse_value(std::string_view text);

// Canonical single-line form; parse_value(print_value(v)) == v. Reals use the
// shortest decimal that round-trips (with ".0" appended when needed so the
// real/integer distinction survives); list separator is ", ".
std::string print_value(const Value& v);

// Shortest round-trip decimal of a double, without the ".0" type marker.
// This is the token form used in bridge and data files.
std::string format_double(double x);

// Global bindings. Lookup of an unbound name is distinguishable (nullptr);
// task-local temporaries never pass through here.
class Env {
public:
    const Value* find(const std::string& name) const;
    void bind(std::string name, Value v);
    std::size_t size() const { return bindings_.size(); }
    const std::map<std::string, Value>& bindings() const { return bindings_; }

private:
    std::map<std::string, Value> bindings_;
};

bool is_identifier(std::string_view s);

// Seedable generator with a documented algorithm (splitmix64): the state
// advances by a fixed odd constant and the output is a xor-shift/multiply
// mix of it. Same seed, same stream; draws lie in [0,1).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}
    static Rng from_entropy();

    std::uint64_t next_u64();
    double next_unit(); // uniform in [0,1), 53 random bits

    static constexpr const char* kAlgorithm = "splitmix64";

private:
    std::uint64_t state_;
};

// List of `times` pairs of uniform draws, consuming 2*times draws row by row.
Value random_table(std::int64_t times, Rng& rng);

// Split a flat list into |list|/k sublists of length k, order preserved.
Value partition(const Value& list, std::int64_t k);

Value flatten(const Value& v);

// Replace every real with |x| < tol by the exact integer 0, recursively.
Value chop(const Value& v, double tol = 1e-10);

// A value is a matrix iff it is a list of equal-length lists of numbers.
bool is_matrix_value(const Value& v);

} // namespace kfarm
