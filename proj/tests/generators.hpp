#pragma once

// Seeded random generators for property tests: nested values (depth <= 4,
// length <= 8) and protocol frames.

#include <cmath>
#include <cstring>

#include "protocol.hpp"
#include "value.hpp"

namespace kfarm::test {

inline Value random_value(Rng& rng, int depth) {
    std::uint64_t pick = rng.next_u64() % (depth > 0 ? 5 : 4);
    switch (pick) {
    case 0: { // real, occasionally from raw bits for full-range coverage
        if (rng.next_u64() % 4 == 0) {
            for (;;) {
                std::uint64_t bits = rng.next_u64();
                double d;
                std::memcpy(&d, &bits, sizeof d);
                if (std::isfinite(d))
                    return Value::real(d);
            }
        }
        return Value::real((rng.next_unit() * 2 - 1) * 1000.0);
    }
    case 1:
        return Value::integer(static_cast<std::int64_t>(rng.next_u64()));
    case 2:
    case 3: {
        static const char charset[] = " abcXYZ019_.,{}[]\"\\#=->!|";
        std::size_t len = rng.next_u64() % 9;
        std::string s;
        for (std::size_t i = 0; i < len; ++i)
            s += charset[rng.next_u64() % (sizeof charset - 1)];
        return Value::text(std::move(s));
    }
    default: {
        std::size_t len = rng.next_u64() % 9;
        Value::List items;
        for (std::size_t i = 0; i < len; ++i)
            items.push_back(random_value(rng, depth - 1));
        return Value::list(std::move(items));
    }
    }
}

inline Message random_message(Rng& rng) {
    static const char charset[] =
        "abcdefghijklmnopqrstuvwxyzABC0123456789 _-.{}[]|><\"\\";
    auto rand_text = [&](std::size_t max_len) {
        std::size_t len = rng.next_u64() % (max_len + 1);
        std::string s;
        for (std::size_t i = 0; i < len; ++i)
            s += charset[rng.next_u64() % (sizeof charset - 1)];
        return s;
    };

    Message m;
    m.id = 1 + rng.next_u64() % 1000000;
    std::size_t payload_lines = rng.next_u64() % 5;
    for (std::size_t i = 0; i < payload_lines; ++i)
        m.payload.push_back(rand_text(24));

    switch (rng.next_u64() % 3) {
    case 0:
        m.kind = MsgKind::request;
        m.command = static_cast<Command>(rng.next_u64() % 6);
        m.arg = rand_text(12);
        break;
    case 1:
        m.kind = MsgKind::ok;
        break;
    default:
        m.kind = MsgKind::error;
        m.code = (rng.next_u64() % 2) ? kErrBadTask : kErrUnbound;
        break;
    }
    return m;
}

} // namespace kfarm::test
