#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <random>
#include <string>
#include <unordered_map>

#include "infocal/num/tape.hpp"

namespace infocal::num {

/// Trainable parameters are partitioned into disjoint update groups.
enum class Group : std::uint8_t { generator = 0, guider = 1, discriminator = 2, language_model = 3 };

inline const char* group_name(Group g) {
  switch (g) {
    case Group::generator: return "generator";
    case Group::guider: return "guider";
    case Group::discriminator: return "discriminator";
    case Group::language_model: return "language_model";
  }
  return "?";
}

class GroupSet {
 public:
  constexpr GroupSet() = default;
  constexpr GroupSet(std::initializer_list<Group> groups) {
    for (auto g : groups) bits_ |= bit(g);
  }
  static constexpr GroupSet none() { return {}; }
  static constexpr GroupSet all() {
    return {Group::generator, Group::guider, Group::discriminator, Group::language_model};
  }
  constexpr bool contains(Group g) const { return (bits_ & bit(g)) != 0; }

 private:
  static constexpr std::uint8_t bit(Group g) { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(g)); }
  std::uint8_t bits_ = 0;
};

template <typename T>
struct Param {
  Tensor<T> value;
  Group group = Group::generator;
};

/// Named parameter arrays. Iteration order is the lexicographic name order,
/// which is also the checkpoint order.
template <typename T>
class ParamStore {
 public:
  void add(const std::string& name, Tensor<T> value, Group group) {
    if (params_.contains(name)) throw ContractViolation("duplicate parameter '" + name + "'");
    params_.emplace(name, Param<T>{std::move(value), group});
  }

  bool contains(const std::string& name) const { return params_.contains(name); }

  Tensor<T>& value(const std::string& name) { return at(name).value; }
  const Tensor<T>& value(const std::string& name) const { return at(name).value; }
  Group group(const std::string& name) const { return at(name).group; }

  Param<T>& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractViolation("unknown parameter '" + name + "'");
    return it->second;
  }
  const Param<T>& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractViolation("unknown parameter '" + name + "'");
    return it->second;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

  std::size_t scalar_count(GroupSet groups = GroupSet::all()) const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_)
      if (groups.contains(p.group)) n += p.value.size();
    return n;
  }

  /// FNV-1a over the raw bytes of every parameter in `groups`.
  std::uint64_t checksum(GroupSet groups) const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& [name, p] : params_) {
      if (!groups.contains(p.group)) continue;
      for (char c : name) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
      const auto* bytes = reinterpret_cast<const unsigned char*>(p.value.storage().data());
      for (std::size_t i = 0; i < p.value.size() * sizeof(T); ++i) h = (h ^ bytes[i]) * 1099511628211ull;
    }
    return h;
  }

 private:
  std::map<std::string, Param<T>> params_;
};

template <typename T, typename Rng>
Tensor<T> uniform_tensor(Shape shape, T bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-static_cast<double>(bound), static_cast<double>(bound));
  Tensor<T> t(std::move(shape));
  for (auto& v : t.storage()) v = static_cast<T>(dist(rng));
  return t;
}

/// Binds store parameters onto a tape on first use. Parameters whose group is
/// in `trainable` become gradient leaves; all others enter as constants, so no
/// gradient is ever produced for them.
template <typename T>
class ParamView {
 public:
  ParamView(Tape<T>& tape, const ParamStore<T>& store, GroupSet trainable)
      : tape_(&tape), store_(&store), trainable_(trainable) {}

  Var<T> operator()(const std::string& name) {
    if (auto it = bound_.find(name); it != bound_.end()) return it->second;
    const auto& p = store_->at(name);
    Var<T> v = trainable_.contains(p.group) ? tape_->leaf(p.value, name, true) : tape_->constant(p.value);
    bound_.emplace(name, v);
    return v;
  }

  Var<T> constant(Tensor<T> t) { return tape_->constant(std::move(t)); }

  Tape<T>& tape() { return *tape_; }
  const ParamStore<T>& store() const { return *store_; }
  GroupSet trainable() const { return trainable_; }

 private:
  Tape<T>* tape_;
  const ParamStore<T>* store_;
  GroupSet trainable_;
  std::unordered_map<std::string, Var<T>> bound_;
};

}  // namespace infocal::num
