#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "epbc/tensor.hpp"

namespace epbc {

struct Param {
    Tensor value;
    Tensor grad;
    bool trainable = true;
};

// Ordered map from dotted path name to (value, grad, trainable).
// Gradients always match the value shape; names are unique.
class ParamSet {
public:
    Param& create(const std::string& name, Tensor init, bool trainable = true);
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    bool has(const std::string& name) const;

    const std::vector<std::string>& names() const { return order_; }
    size_t size() const { return order_.size(); }

    void zero_grads();
    int64_t value_count() const;

    // Checkpoint container: a text manifest (one line per entry:
    // name, four extents, byte offset) followed by the little-endian
    // IEEE-754 64-bit payload. Round trips are bit-exact.
    void save(const std::string& path) const;
    void load_values(const std::string& path);

private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, Param> map_;
};

}  // namespace epbc
