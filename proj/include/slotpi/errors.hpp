#pragma once

#include <stdexcept>
#include <string>

namespace slotpi {

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct NaNError : std::runtime_error {
    explicit NaNError(const std::string& msg) : std::runtime_error("NaN encountered: " + msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct HistoryEmptyError : std::runtime_error {
    explicit HistoryEmptyError(const std::string& msg) : std::runtime_error("empty history: " + msg) {}
};

struct BufferEmptyError : std::runtime_error {
    explicit BufferEmptyError(const std::string& msg) : std::runtime_error("empty buffer: " + msg) {}
};

struct GraphDetachedError : std::runtime_error {
    explicit GraphDetachedError(const std::string& msg) : std::runtime_error("detached from graph: " + msg) {}
};

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error("format error: " + msg) {}
};

}  // namespace slotpi
