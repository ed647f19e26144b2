#include "epbc/params.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace epbc {

Param& ParamSet::create(const std::string& name, Tensor init, bool trainable) {
    if (map_.count(name))
        throw ConfigError("duplicate parameter name: " + name);
    Param p;
    p.grad = Tensor(init.shape);
    p.value = std::move(init);
    p.trainable = trainable;
    order_.push_back(name);
    return map_.emplace(name, std::move(p)).first->second;
}

Param& ParamSet::at(const std::string& name) {
    auto it = map_.find(name);
    if (it == map_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
}

const Param& ParamSet::at(const std::string& name) const {
    auto it = map_.find(name);
    if (it == map_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
}

bool ParamSet::has(const std::string& name) const {
    return map_.count(name) != 0;
}

void ParamSet::zero_grads() {
    for (auto& name : order_) {
        auto& g = map_[name].grad.v;
        std::fill(g.begin(), g.end(), 0.0);
    }
}

int64_t ParamSet::value_count() const {
    int64_t total = 0;
    for (auto& name : order_) total += map_.at(name).value.numel();
    return total;
}

namespace {

// Doubles are serialized as little-endian byte images regardless of host
// order so checkpoints are portable and round trips stay bit-exact.
void put_f64_le(std::string& out, double x) {
    uint64_t bits;
    std::memcpy(&bits, &x, 8);
    for (int i = 0; i < 8; ++i) out.push_back(char((bits >> (8 * i)) & 0xff));
}

double get_f64_le(const char* p) {
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
        bits |= uint64_t(uint8_t(p[i])) << (8 * i);
    double x;
    std::memcpy(&x, &bits, 8);
    return x;
}

}  // namespace

void ParamSet::save(const std::string& path) const {
    std::ostringstream header;
    header << "EPBC1 " << order_.size() << "\n";
    int64_t offset = 0;
    for (auto& name : order_) {
        const Tensor& t = map_.at(name).value;
        header << name << " " << t.shape.n << " " << t.shape.c << " "
               << t.shape.h << " " << t.shape.w << " " << offset << "\n";
        offset += t.numel() * 8;
    }
    header << "DATA " << offset << "\n";

    std::string blob;
    blob.reserve(size_t(offset));
    for (auto& name : order_)
        for (double x : map_.at(name).value.v) put_f64_le(blob, x);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
    f << header.str();
    f.write(blob.data(), std::streamsize(blob.size()));
    if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

void ParamSet::load_values(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read checkpoint: " + path);

    std::string magic;
    size_t count = 0;
    f >> magic >> count;
    if (magic != "EPBC1")
        throw std::runtime_error("bad checkpoint magic in " + path);

    struct Entry {
        std::string name;
        Shape shape;
        int64_t offset;
    };
    std::vector<Entry> entries(count);
    for (auto& e : entries) {
        f >> e.name >> e.shape.n >> e.shape.c >> e.shape.h >> e.shape.w >>
            e.offset;
        if (!f) throw std::runtime_error("truncated checkpoint manifest: " + path);
    }
    std::string tag;
    int64_t total = 0;
    f >> tag >> total;
    if (tag != "DATA")
        throw std::runtime_error("missing DATA marker in " + path);
    f.get();  // newline before the payload

    std::string blob(size_t(total), '\0');
    f.read(blob.data(), total);
    if (f.gcount() != total)
        throw std::runtime_error("truncated checkpoint payload: " + path);

    for (auto& e : entries) {
        Param& p = at(e.name);
        if (!(p.value.shape == e.shape))
            throw ShapeError("checkpoint shape mismatch for " + e.name + ": " +
                             e.shape.str() + " vs " + p.value.shape.str());
        const char* src = blob.data() + e.offset;
        for (int64_t i = 0; i < p.value.numel(); ++i)
            p.value.v[size_t(i)] = get_f64_le(src + i * 8);
    }
}

}  // namespace epbc
