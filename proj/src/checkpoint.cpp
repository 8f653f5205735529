#include "fedbkd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "fedbkd/errors.hpp"

namespace fedbkd {

namespace {

constexpr char kMagic[8] = {'F', 'B', 'K', 'D', 'C', 'K', 'P', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char bytes[8];
    is.read(reinterpret_cast<char*>(bytes), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}

void put_f64(std::ostream& os, double d) {
    put_u64(os, std::bit_cast<std::uint64_t>(d));
}

double get_f64(std::istream& is) {
    return std::bit_cast<double>(get_u64(is));
}

void put_string(std::ostream& os, const std::string& s) {
    put_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
    const std::uint64_t n = get_u64(is);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}

} // namespace

void save_checkpoint(const LayeredModel& model, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw InputError("checkpoint: cannot open '" + path.string() + "' for writing");
    os.write(kMagic, sizeof(kMagic));
    put_string(os, model.arch.descriptor());
    put_u64(os, model.params.entries.size());
    for (const auto& [name, tensor] : model.params.entries) {
        put_string(os, name);
        put_u64(os, tensor.shape.size());
        for (std::size_t d : tensor.shape) put_u64(os, d);
        for (double v : tensor.values) put_f64(os, v);
    }
    if (!os)
        throw InputError("checkpoint: write failed for '" + path.string() + "'");
}

LayeredModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw InputError("checkpoint: cannot open '" + path.string() + "'");
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw InputError("checkpoint: bad magic in '" + path.string() + "'");

    const Architecture arch = Architecture::from_descriptor(get_string(is));
    LayeredModel model = LayeredModel::zeros(arch);

    const std::uint64_t count = get_u64(is);
    if (count != model.params.entries.size())
        throw InputError("checkpoint: parameter count does not match architecture");
    for (std::uint64_t k = 0; k < count; ++k) {
        const std::string name = get_string(is);
        auto it = model.params.entries.find(name);
        if (it == model.params.entries.end())
            throw InputError("checkpoint: unknown parameter '" + name + "'");
        Tensor& t = it->second;
        const std::uint64_t ndim = get_u64(is);
        std::vector<std::size_t> shape(ndim);
        for (std::uint64_t i = 0; i < ndim; ++i) shape[i] = get_u64(is);
        if (shape != t.shape)
            throw InputError("checkpoint: shape mismatch for '" + name + "'");
        for (double& v : t.values) v = get_f64(is);
    }
    if (!is)
        throw InputError("checkpoint: truncated file '" + path.string() + "'");
    return model;
}

} // namespace fedbkd
