#include "raregan/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "raregan/errors.hpp"

namespace raregan {

namespace {

constexpr const char* kMagic = "raregan-net";
constexpr int kVersion = 1;

void write_values(std::ostream& out, std::span<const double> values) {
    char buf[32];
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", values[i]);
        if (i > 0) out << ' ';
        out << buf;
    }
    out << '\n';
}

void read_values(std::istream& in, std::span<double> values) {
    std::string token;
    for (double& v : values) {
        if (!(in >> token)) throw FormatError("checkpoint: truncated parameter block");
        try {
            v = std::stod(token);
        } catch (const std::exception&) {
            throw FormatError("checkpoint: bad number '" + token + "'");
        }
    }
}

void expect(std::istream& in, const std::string& keyword) {
    std::string token;
    if (!(in >> token) || token != keyword) throw FormatError("checkpoint: expected '" + keyword + "', got '" + token + "'");
}

}  // namespace

void save_net(std::ostream& out, const DenseNet& net) {
    out << kMagic << ' ' << kVersion << '\n';
    out << "layers " << net.layers().size() << '\n';
    for (const Layer& layer : net.layers()) {
        out << "layer " << layer.in_dim() << ' ' << layer.out_dim() << ' ' << to_string(layer.activation) << ' ' << layer.groups.size();
        for (std::size_t g : layer.groups) out << ' ' << g;
        out << '\n';
        write_values(out, layer.weight.data());
        write_values(out, layer.bias);
    }
    out << "end\n";
}

DenseNet load_net(std::istream& in) {
    expect(in, kMagic);
    int version = 0;
    if (!(in >> version) || version != kVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    expect(in, "layers");
    std::size_t count = 0;
    if (!(in >> count) || count == 0) throw FormatError("checkpoint: bad layer count");
    std::vector<Layer> layers;
    for (std::size_t l = 0; l < count; ++l) {
        expect(in, "layer");
        std::size_t in_dim = 0, out_dim = 0, n_groups = 0;
        std::string act;
        if (!(in >> in_dim >> out_dim >> act >> n_groups)) throw FormatError("checkpoint: bad layer header");
        Layer layer;
        layer.activation = activation_from_string(act);
        layer.groups.resize(n_groups);
        for (std::size_t& g : layer.groups)
            if (!(in >> g)) throw FormatError("checkpoint: bad group width");
        layer.weight = Matrix(out_dim, in_dim);
        layer.bias.assign(out_dim, 0.0);
        read_values(in, layer.weight.data());
        read_values(in, layer.bias);
        layers.push_back(std::move(layer));
    }
    expect(in, "end");
    return DenseNet(std::move(layers));
}

void save_nets(const std::filesystem::path& path, const std::vector<DenseNet>& nets) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    for (const DenseNet& net : nets) save_net(out, net);
}

std::vector<DenseNet> load_nets(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
    std::vector<DenseNet> nets;
    in >> std::ws;
    while (in.peek() != std::char_traits<char>::eof()) {
        nets.push_back(load_net(in));
        in >> std::ws;
    }
    return nets;
}

}  // namespace raregan
