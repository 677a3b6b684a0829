// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace radsnn {

// Every failure in the library surfaces as an Error carrying a short
// machine-readable code ("empty_spectrum", "event_overrun", ...) next to the
// human-readable message. The CLI serializes both into its error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

namespace detail {

inline void append(std::ostringstream&) {}

template <typename T, typename... Rest>
void append(std::ostringstream& oss, T&& head, Rest&&... rest) {
  oss << std::forward<T>(head);
  append(oss, std::forward<Rest>(rest)...);
}

}  // namespace detail

template <typename... Args>
[[noreturn]] void fail(std::string code, Args&&... parts) {
  std::ostringstream oss;
  detail::append(oss, std::forward<Args>(parts)...);
  throw Error(std::move(code), oss.str());
}

template <typename... Args>
void require(bool condition, std::string code, Args&&... parts) {
  if (!condition) fail(std::move(code), std::forward<Args>(parts)...);
}

}  // namespace radsnn
