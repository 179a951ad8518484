#include "gorila/errors.hpp"

namespace gorila {

const char* to_string(ProtocolErrc code) {
    switch (code) {
        case ProtocolErrc::bad_magic: return "bad magic";
        case ProtocolErrc::bad_crc: return "bad crc";
        case ProtocolErrc::truncated: return "truncated";
        case ProtocolErrc::unknown_kind: return "unknown kind";
        case ProtocolErrc::oversize: return "oversize";
        case ProtocolErrc::malformed: return "malformed";
    }
    return "unknown";
}

}  // namespace gorila
