#pragma once

#include <stdexcept>
#include <string>

namespace pqvae {

// Error categories. The CLI maps each category to a distinct exit code,
// so library code should always throw through one of the helpers below.
enum class errc {
    config,          // invalid configuration value or key
    shape,           // tensor dimension mismatch
    state,           // stale or mismatched internal state (e.g. cache vs net)
    input,           // non-finite or otherwise invalid input data
    io,              // missing file or failed read/write
    parse,           // malformed file contents (bad magic, truncation)
    stamp_mismatch,  // artifact parameter stamps disagree (model vs index)
    training,        // numerical failure during optimization
};

inline const char* errc_name(errc c) {
    switch (c) {
        case errc::config: return "config";
        case errc::shape: return "shape";
        case errc::state: return "state";
        case errc::input: return "input";
        case errc::io: return "io";
        case errc::parse: return "parse";
        case errc::stamp_mismatch: return "stamp_mismatch";
        case errc::training: return "training";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(errc kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    errc kind() const { return kind_; }

private:
    errc kind_;
};

[[noreturn]] inline void raise(errc kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool ok, errc kind, const std::string& message) {
    if (!ok) raise(kind, message);
}

}  // namespace pqvae
