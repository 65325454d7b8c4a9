#pragma once

#include <stdexcept>
#include <string>

namespace deepcorrect {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct StateError : std::runtime_error {
  explicit StateError(const std::string& msg) : std::runtime_error("state error: " + msg) {}
};

struct GraphError : std::runtime_error {
  explicit GraphError(const std::string& msg) : std::runtime_error("graph error: " + msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

inline void check_shape(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

inline void check_config(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

inline void check_state(bool cond, const std::string& msg) {
  if (!cond) throw StateError(msg);
}

inline void check_graph(bool cond, const std::string& msg) {
  if (!cond) throw GraphError(msg);
}

}  // namespace deepcorrect
