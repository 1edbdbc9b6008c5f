#pragma once

#include <cassert>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

namespace damo {

// Dense (state, action) table, row-major over states.
class SaTable {
 public:
  SaTable() = default;
  SaTable(int n_states, int n_actions, double fill = 0.0)
      : ns_(n_states), na_(n_actions),
        v_(static_cast<std::size_t>(n_states) * n_actions, fill) {}

  int n_states() const { return ns_; }
  int n_actions() const { return na_; }
  std::size_t size() const { return v_.size(); }

  double& operator()(int s, int a) { return v_[index(s, a)]; }
  double operator()(int s, int a) const { return v_[index(s, a)]; }

  std::span<double> row(int s) {
    return {v_.data() + static_cast<std::size_t>(s) * na_,
            static_cast<std::size_t>(na_)};
  }
  std::span<const double> row(int s) const {
    return {v_.data() + static_cast<std::size_t>(s) * na_,
            static_cast<std::size_t>(na_)};
  }

  std::vector<double>& data() { return v_; }
  const std::vector<double>& data() const { return v_; }

  std::size_t index(int s, int a) const {
    assert(s >= 0 && s < ns_ && a >= 0 && a < na_);
    return static_cast<std::size_t>(s) * na_ + a;
  }

  bool operator==(const SaTable&) const = default;

 private:
  int ns_ = 0;
  int na_ = 0;
  std::vector<double> v_;
};

// Dense (state, action, next state) table; index order s, a, s'.
class SasTable {
 public:
  SasTable() = default;
  SasTable(int n_states, int n_actions, double fill = 0.0)
      : ns_(n_states), na_(n_actions),
        v_(static_cast<std::size_t>(n_states) * n_actions * n_states, fill) {}

  int n_states() const { return ns_; }
  int n_actions() const { return na_; }
  std::size_t size() const { return v_.size(); }

  double& operator()(int s, int a, int sp) { return v_[index(s, a, sp)]; }
  double operator()(int s, int a, int sp) const { return v_[index(s, a, sp)]; }

  // Next-state slice for a fixed (s, a).
  std::span<double> row(int s, int a) {
    return {v_.data() + index(s, a, 0), static_cast<std::size_t>(ns_)};
  }
  std::span<const double> row(int s, int a) const {
    return {v_.data() + index(s, a, 0), static_cast<std::size_t>(ns_)};
  }

  std::vector<double>& data() { return v_; }
  const std::vector<double>& data() const { return v_; }

  std::size_t index(int s, int a, int sp) const {
    assert(s >= 0 && s < ns_ && a >= 0 && a < na_ && sp >= 0 && sp < ns_);
    return (static_cast<std::size_t>(s) * na_ + a) * ns_ + sp;
  }

  double sum() const { return std::accumulate(v_.begin(), v_.end(), 0.0); }

  bool operator==(const SasTable&) const = default;

 private:
  int ns_ = 0;
  int na_ = 0;
  std::vector<double> v_;
};

}  // namespace damo
