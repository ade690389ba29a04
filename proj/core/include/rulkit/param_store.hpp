#pragma once

#include <map>
#include <string>
#include <vector>

#include "rulkit/errors.hpp"
#include "rulkit/tensor.hpp"

namespace rulkit {

/// Named-tensor map holding every model weight.  Iteration order is the
/// lexicographic name order of std::map, which keeps serialization and
/// optimizer sweeps deterministic.
template <typename T>
class ParameterStore {
public:
    using Map = std::map<std::string, Tensor<T>>;
    using const_iterator = typename Map::const_iterator;
    using iterator = typename Map::iterator;

    void insert(const std::string& name, Tensor<T> value) {
        auto [it, fresh] = tensors_.emplace(name, std::move(value));
        if (!fresh) throw UsageError("duplicate parameter name: " + name);
    }

    bool has(const std::string& name) const { return tensors_.count(name) != 0; }

    Tensor<T>& at(const std::string& name) {
        auto it = tensors_.find(name);
        if (it == tensors_.end()) throw UsageError("unknown parameter: " + name);
        return it->second;
    }

    const Tensor<T>& at(const std::string& name) const {
        auto it = tensors_.find(name);
        if (it == tensors_.end()) throw UsageError("unknown parameter: " + name);
        return it->second;
    }

    std::size_t tensor_count() const { return tensors_.size(); }

    std::size_t element_count() const {
        std::size_t n = 0;
        for (const auto& [name, t] : tensors_) n += t.size();
        return n;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(tensors_.size());
        for (const auto& [name, t] : tensors_) out.push_back(name);
        return out;
    }

    iterator begin() { return tensors_.begin(); }
    iterator end() { return tensors_.end(); }
    const_iterator begin() const { return tensors_.begin(); }
    const_iterator end() const { return tensors_.end(); }

    bool operator==(const ParameterStore& o) const {
        return tensors_ == o.tensors_;
    }

    template <typename U>
    ParameterStore<U> cast() const {
        ParameterStore<U> out;
        for (const auto& [name, t] : tensors_)
            out.insert(name, t.template cast<U>());
        return out;
    }

private:
    Map tensors_;
};

/// Per-parameter-name frozen flag.  Frozen parameters are excluded from
/// gradient computation and optimizer updates.
class FreezeMask {
public:
    void set(const std::string& name, bool frozen) { frozen_[name] = frozen; }

    bool is_frozen(const std::string& name) const {
        auto it = frozen_.find(name);
        if (it == frozen_.end())
            throw UsageError("freeze mask has no entry for: " + name);
        return it->second;
    }

    std::size_t size() const { return frozen_.size(); }

    std::size_t trainable_count() const {
        std::size_t n = 0;
        for (const auto& [name, f] : frozen_)
            if (!f) ++n;
        return n;
    }

    std::vector<std::string> trainable_names() const {
        std::vector<std::string> out;
        for (const auto& [name, f] : frozen_)
            if (!f) out.push_back(name);
        return out;
    }

    std::vector<std::string> frozen_names() const {
        std::vector<std::string> out;
        for (const auto& [name, f] : frozen_)
            if (f) out.push_back(name);
        return out;
    }

    /// True when the mask names exactly the given parameter set.
    bool covers(const std::vector<std::string>& names) const {
        if (names.size() != frozen_.size()) return false;
        for (const auto& n : names)
            if (frozen_.find(n) == frozen_.end()) return false;
        return true;
    }

private:
    std::map<std::string, bool> frozen_;
};

/// Sum of squared elements over the trainable parameters (the weight-decay
/// penalty ahead of its lambda factor).  Without a mask every parameter
/// counts.
template <typename T>
double l2_squared(const ParameterStore<T>& params, const FreezeMask* mask) {
    double s = 0;
    for (const auto& [name, t] : params) {
        if (mask && mask->is_frozen(name)) continue;
        for (T v : t.data()) s += double(v) * double(v);
    }
    return s;
}

/// All parameter elements as one flat vector, in name order.
template <typename T>
std::vector<double> flatten(const ParameterStore<T>& params) {
    std::vector<double> out;
    out.reserve(params.element_count());
    for (const auto& [name, t] : params)
        for (T v : t.data()) out.push_back(double(v));
    return out;
}

/// Inverse of flatten(): writes a flat vector back into the store.
template <typename T>
void unflatten(ParameterStore<T>& params, const std::vector<double>& flat) {
    if (flat.size() != params.element_count())
        throw ShapeError("unflatten: element count mismatch");
    std::size_t k = 0;
    for (auto& [name, t] : params)
        for (auto& v : t.data()) v = T(flat[k++]);
}

} // namespace rulkit
