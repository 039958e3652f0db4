#pragma once

#include <stdexcept>
#include <string>

namespace xfuse {

// Base for everything thrown by the library.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Tensor dimension disagreement (matmul inner dims, conv channels, ...).
struct ShapeError : Error {
    using Error::Error;
};

// Bad data fed to an operation (non-binary targets, empty score list, ...).
struct ValidationError : Error {
    using Error::Error;
};

// Invalid configuration value or file.
struct ConfigError : Error {
    using Error::Error;
};

// Broken API precondition (non-scalar backward seed, missing gradient, ...).
struct ContractError : Error {
    using Error::Error;
};

// Encoder transfer between incompatible architectures.
struct TransferError : Error {
    using Error::Error;
};

// Missing or inconsistent dataset/map manifests.
struct ManifestError : Error {
    using Error::Error;
};

// Training diverged (NaN/inf loss).
struct DivergenceError : Error {
    using Error::Error;
};

// Checkpoint container failures, with a typed kind so callers and tests can
// distinguish a flipped magic byte from a short file or a bad checksum.
struct CheckpointError : Error {
    enum class Kind { Header, Version, Truncation, Checksum, Format, ModelKind, Io };

    CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

  private:
    Kind kind_;
};

} // namespace xfuse
