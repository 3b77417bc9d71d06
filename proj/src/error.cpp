#include "error.hpp"

namespace kfarm {

const char* errc_name(Errc c) {
    switch (c) {
    case Errc::parse: return "parse";
    case Errc::bad_value: return "bad_value";
    case Errc::unbound: return "unbound";
    case Errc::bad_task: return "bad_task";
    case Errc::io: return "io";
    case Errc::spawn: return "spawn";
    case Errc::timeout: return "timeout";
    case Errc::protocol: return "protocol";
    case Errc::state: return "state";
    }
    return "unknown";
}

} // namespace kfarm
