#include "raregan/schema.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "raregan/errors.hpp"

namespace raregan {

PacketSchema::PacketSchema(std::vector<FieldSpec> fields, std::string name) : name_(std::move(name)), fields_(std::move(fields)) {
    if (fields_.empty()) throw InvalidArgument("PacketSchema: at least one field required");
    for (const FieldSpec& f : fields_) {
        if (f.cardinality < 2) throw InvalidArgument("PacketSchema: field '" + f.name + "' has cardinality < 2");
        if (!f.labels.empty()) {
            if (f.labels.size() != f.cardinality)
                throw InvalidArgument("PacketSchema: field '" + f.name + "' label count does not match cardinality");
            if (std::set<std::string>(f.labels.begin(), f.labels.end()).size() != f.labels.size())
                throw InvalidArgument("PacketSchema: field '" + f.name + "' has duplicate labels");
        }
        offsets_.push_back(width_);
        width_ += f.cardinality;
    }
}

std::vector<std::size_t> PacketSchema::group_widths() const {
    std::vector<std::size_t> widths;
    widths.reserve(fields_.size());
    for (const FieldSpec& f : fields_) widths.push_back(f.cardinality);
    return widths;
}

bool PacketSchema::same_layout(const PacketSchema& other) const {
    return fields_.size() == other.fields_.size() &&
           std::equal(fields_.begin(), fields_.end(), other.fields_.begin(), [](const FieldSpec& a, const FieldSpec& b) {
               return a.name == b.name && a.cardinality == b.cardinality && a.labels == b.labels;
           });
}

std::size_t PacketHash::operator()(const Packet& p) const noexcept {
    std::size_t h = 1469598103934665603ULL;
    for (std::uint32_t v : p.values) {
        h ^= v;
        h *= 1099511628211ULL;
    }
    return h;
}

void validate(const PacketSchema& schema, const Packet& packet) {
    if (packet.values.size() != schema.field_count())
        throw DimensionMismatch("packet has " + std::to_string(packet.values.size()) + " fields, schema has " +
                                std::to_string(schema.field_count()));
    for (std::size_t i = 0; i < packet.values.size(); ++i) {
        if (packet.values[i] >= schema.fields()[i].cardinality)
            throw InvalidArgument("packet index " + std::to_string(packet.values[i]) + " out of range for field '" +
                                  schema.fields()[i].name + "'");
    }
}

std::vector<double> encode(const PacketSchema& schema, const Packet& packet) {
    validate(schema, packet);
    std::vector<double> out(schema.encoded_width(), 0.0);
    for (std::size_t i = 0; i < packet.values.size(); ++i) out[schema.offset(i) + packet.values[i]] = 1.0;
    return out;
}

Matrix encode_batch(const PacketSchema& schema, std::span<const Packet> packets) {
    Matrix out(packets.size(), schema.encoded_width());
    for (std::size_t r = 0; r < packets.size(); ++r) {
        validate(schema, packets[r]);
        auto row = out.row(r);
        for (std::size_t i = 0; i < packets[r].values.size(); ++i) row[schema.offset(i) + packets[r].values[i]] = 1.0;
    }
    return out;
}

Packet decode(const PacketSchema& schema, std::span<const double> soft) {
    if (soft.size() != schema.encoded_width())
        throw DimensionMismatch("decode: vector width " + std::to_string(soft.size()) + " != schema width " +
                                std::to_string(schema.encoded_width()));
    Packet p;
    p.values.reserve(schema.field_count());
    for (std::size_t i = 0; i < schema.field_count(); ++i) {
        const std::size_t off = schema.offset(i);
        std::uint32_t best = 0;
        for (std::size_t j = 0; j < schema.fields()[i].cardinality; ++j) {
            const double v = soft[off + j];
            if (!std::isfinite(v)) throw InvalidArgument("decode: non-finite entry");
            if (v > soft[off + best]) best = static_cast<std::uint32_t>(j);
        }
        p.values.push_back(best);
    }
    return p;
}

std::vector<Packet> decode_batch(const PacketSchema& schema, const Matrix& soft) {
    std::vector<Packet> out;
    out.reserve(soft.rows());
    for (std::size_t r = 0; r < soft.rows(); ++r) out.push_back(decode(schema, soft.row(r)));
    return out;
}

Packet sample_uniform(const PacketSchema& schema, Rng& rng) {
    Packet p;
    p.values.reserve(schema.field_count());
    for (const FieldSpec& f : schema.fields()) {
        std::uniform_int_distribution<std::uint32_t> dist(0, static_cast<std::uint32_t>(f.cardinality - 1));
        p.values.push_back(dist(rng));
    }
    return p;
}

boost::multiprecision::cpp_int search_space_size(const PacketSchema& schema) {
    boost::multiprecision::cpp_int size = 1;
    for (const FieldSpec& f : schema.fields()) size *= f.cardinality;
    return size;
}

std::uint64_t packet_rank(const PacketSchema& schema, const Packet& packet) {
    validate(schema, packet);
    std::uint64_t rank = 0;
    for (std::size_t i = 0; i < packet.values.size(); ++i) rank = rank * schema.fields()[i].cardinality + packet.values[i];
    return rank;
}

Packet packet_from_rank(const PacketSchema& schema, std::uint64_t rank) {
    Packet p;
    p.values.resize(schema.field_count());
    for (std::size_t i = schema.field_count(); i-- > 0;) {
        const std::uint64_t card = schema.fields()[i].cardinality;
        p.values[i] = static_cast<std::uint32_t>(rank % card);
        rank /= card;
    }
    if (rank != 0) throw InvalidArgument("packet_from_rank: rank outside the search space");
    return p;
}

namespace {

void add_bits(std::vector<FieldSpec>& fields, const std::string& name, std::size_t bits) {
    if (bits == 1) {
        fields.push_back({name, 2, {}});
        return;
    }
    for (std::size_t b = 0; b < bits; ++b) fields.push_back({name + "_b" + std::to_string(b), 2, {}});
}

void add_choice(std::vector<FieldSpec>& fields, const std::string& name, std::vector<std::string> values) {
    const std::size_t n = values.size();
    fields.push_back({name, n, std::move(values)});
}

}  // namespace

PacketSchema dns_schema() {
    std::vector<FieldSpec> f;
    add_bits(f, "id", 16);
    add_choice(f, "opcode", {"0", "1", "2", "3", "4", "5"});
    for (const char* flag : {"aa", "tc", "rd", "ra", "z", "ad", "cd"}) add_bits(f, flag, 1);
    add_bits(f, "rcode", 4);
    add_choice(f, "rdatatype", {"1",  "28",  "18",  "42", "257", "60",    "59", "37",  "5",  "49",  "32769",
                                "39", "48",  "43",  "55", "45",  "25",    "36", "29",  "15", "35",  "2",
                                "47", "50",  "51",  "61", "12",  "46",    "17", "24",  "6",  "33",  "44",
                                "32768", "249", "52", "250", "16", "256", "255", "252", "251", "41"});
    add_choice(f, "rdataclass", {"1", "3", "4", "255"});
    add_bits(f, "edns", 1);
    add_bits(f, "dnssec", 1);
    add_bits(f, "payload", 16);
    add_choice(f, "url", {"berkeley.edu", "energy.gov", "chase.com", "aetna.com", "google.com", "Nairaland.com", "Alibaba.com",
                          "Cambridge.org", "Alarabiya.net", "Bnamericas.com"});
    return PacketSchema(std::move(f), "dns");
}

PacketSchema fivetuple_schema() {
    std::vector<FieldSpec> f;
    add_bits(f, "src_ip", 32);
    add_bits(f, "dst_ip", 32);
    add_bits(f, "src_port", 16);
    add_bits(f, "dst_port", 16);
    add_bits(f, "protocol", 7);
    return PacketSchema(std::move(f), "fivetuple");
}

PacketSchema toy_schema(std::size_t binary_fields) {
    if (binary_fields == 0) throw InvalidArgument("toy_schema: at least one field required");
    std::vector<FieldSpec> f;
    for (std::size_t i = 0; i < binary_fields; ++i) f.push_back({"f" + std::to_string(i), 2, {}});
    return PacketSchema(std::move(f), "toy-" + std::to_string(binary_fields));
}

PacketSchema builtin_schema(std::string_view name) {
    if (name == "dns") return dns_schema();
    if (name == "fivetuple") return fivetuple_schema();
    if (name.starts_with("toy-")) {
        std::size_t n = 0;
        const auto digits = name.substr(4);
        const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), n);
        if (ec == std::errc() && ptr == digits.data() + digits.size() && n > 0) return toy_schema(n);
    }
    throw InvalidArgument("unknown built-in schema '" + std::string(name) + "'");
}

PacketSchema load_schema(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open schema file " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("schema file " + path.string() + ": " + e.what());
    }
    if (!doc.contains("fields") || !doc["fields"].is_array()) throw FormatError("schema file " + path.string() + ": missing 'fields' array");
    std::vector<FieldSpec> fields;
    for (const auto& entry : doc["fields"]) {
        FieldSpec f;
        f.name = entry.at("name").get<std::string>();
        f.cardinality = entry.at("cardinality").get<std::size_t>();
        if (entry.contains("labels")) f.labels = entry["labels"].get<std::vector<std::string>>();
        fields.push_back(std::move(f));
    }
    return PacketSchema(std::move(fields), doc.value("name", path.stem().string()));
}

void save_schema(const std::filesystem::path& path, const PacketSchema& schema) {
    nlohmann::json doc;
    doc["name"] = schema.name();
    doc["fields"] = nlohmann::json::array();
    for (const FieldSpec& f : schema.fields()) {
        nlohmann::json entry = {{"name", f.name}, {"cardinality", f.cardinality}};
        if (!f.labels.empty()) entry["labels"] = f.labels;
        doc["fields"].push_back(std::move(entry));
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write schema file " + path.string());
    out << doc.dump(2) << '\n';
}

PacketSchema resolve_schema(const std::string& name_or_path) {
    if (name_or_path == "dns" || name_or_path == "fivetuple" || name_or_path.starts_with("toy-")) return builtin_schema(name_or_path);
    if (!std::filesystem::exists(name_or_path)) throw InvalidArgument("schema file not found: " + name_or_path);
    return load_schema(name_or_path);
}

std::string format_packet(const Packet& packet) {
    std::string out;
    for (std::size_t i = 0; i < packet.values.size(); ++i) {
        if (i > 0) out += ',';
        out += std::to_string(packet.values[i]);
    }
    return out;
}

Packet parse_packet(const PacketSchema& schema, std::string_view line) {
    Packet p;
    while (!line.empty()) {
        const auto comma = line.find(',');
        std::string_view tok = line.substr(0, comma);
        while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
        while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\r')) tok.remove_suffix(1);
        std::uint32_t v = 0;
        const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || ptr != tok.data() + tok.size()) throw FormatError("bad packet token '" + std::string(tok) + "'");
        p.values.push_back(v);
        if (comma == std::string_view::npos) break;
        line.remove_prefix(comma + 1);
    }
    validate(schema, p);
    return p;
}

void write_packets(std::ostream& out, std::span<const Packet> packets) {
    for (const Packet& p : packets) out << format_packet(p) << '\n';
}

std::vector<Packet> read_packets(std::istream& in, const PacketSchema& schema) {
    std::vector<Packet> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line.front() == '#') continue;
        out.push_back(parse_packet(schema, line));
    }
    return out;
}

}  // namespace raregan
