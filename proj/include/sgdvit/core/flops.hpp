#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sgdvit/core/error.hpp"

namespace sgdvit {

/// Multiply-accumulate counts keyed by op kind.
struct FlopReport {
  std::map<std::string, std::uint64_t> macs;

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (const auto& [_, v] : macs) t += v;
    return t;
  }
  std::uint64_t get(const std::string& kind) const {
    auto it = macs.find(kind);
    return it == macs.end() ? 0 : it->second;
  }
  FlopReport& operator+=(const FlopReport& o) {
    for (const auto& [k, v] : o.macs) macs[k] += v;
    return *this;
  }
};

/// Counts MACs of every op executed on this thread while the scope is open.
///
/// Scopes nest: an op is charged to every open scope, so a parent scope's
/// report is the sum of its children and the ops run directly inside it.
/// Scopes must be closed in LIFO order; close() on a scope that is not the
/// innermost one throws.
class FlopScope {
 public:
  explicit FlopScope(std::string name = {}) : name_(std::move(name)) { stack().push_back(this); }
  ~FlopScope() {
    if (open_ && !stack().empty() && stack().back() == this) stack().pop_back();
  }
  FlopScope(const FlopScope&) = delete;
  FlopScope& operator=(const FlopScope&) = delete;

  const std::string& name() const { return name_; }
  const FlopReport& report() const { return report_; }

  /// Stops counting and returns the final report.
  FlopReport close() {
    if (!open_) return report_;
    if (stack().empty() || stack().back() != this)
      throw Error("FlopScope '" + name_ + "' closed out of LIFO order");
    stack().pop_back();
    open_ = false;
    return report_;
  }

  static bool counting() { return !stack().empty(); }

  static void charge(const char* kind, std::uint64_t macs) {
    for (auto* s : stack()) s->report_.macs[kind] += macs;
  }

 private:
  static std::vector<FlopScope*>& stack() {
    thread_local std::vector<FlopScope*> scopes;
    return scopes;
  }

  std::string name_;
  FlopReport report_;
  bool open_ = true;
};

}  // namespace sgdvit
