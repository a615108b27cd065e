#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "raregan/matrix.hpp"
#include "raregan/nn.hpp"

namespace raregan {

struct FieldSpec {
    std::string name;
    std::size_t cardinality = 2;
    // Optional human-readable value for each category.
    std::vector<std::string> labels;
};

// Ordered categorical fields spanning the sample space. Each field is encoded
// as a one-hot block of width `cardinality`; blocks are concatenated in order.
class PacketSchema {
public:
    PacketSchema() = default;
    explicit PacketSchema(std::vector<FieldSpec> fields, std::string name = {});

    const std::string& name() const { return name_; }
    const std::vector<FieldSpec>& fields() const { return fields_; }
    std::size_t field_count() const { return fields_.size(); }
    std::size_t encoded_width() const { return width_; }
    std::size_t offset(std::size_t field) const { return offsets_[field]; }
    // Widths of the per-field softmax groups, i.e. the cardinalities.
    std::vector<std::size_t> group_widths() const;

    bool operator==(const PacketSchema& other) const { return name_ == other.name_ && same_layout(other); }
    bool same_layout(const PacketSchema& other) const;

private:
    std::string name_;
    std::vector<FieldSpec> fields_;
    std::vector<std::size_t> offsets_;
    std::size_t width_ = 0;
};

// One category index per field.
struct Packet {
    std::vector<std::uint32_t> values;

    auto operator<=>(const Packet&) const = default;
};

struct PacketHash {
    std::size_t operator()(const Packet& p) const noexcept;
};

void validate(const PacketSchema& schema, const Packet& packet);

std::vector<double> encode(const PacketSchema& schema, const Packet& packet);
Matrix encode_batch(const PacketSchema& schema, std::span<const Packet> packets);

// Per-field argmax; ties go to the lowest index.
Packet decode(const PacketSchema& schema, std::span<const double> soft);
std::vector<Packet> decode_batch(const PacketSchema& schema, const Matrix& soft);

Packet sample_uniform(const PacketSchema& schema, Rng& rng);

boost::multiprecision::cpp_int search_space_size(const PacketSchema& schema);

// Mixed-radix rank of a packet (field 0 most significant) and its inverse.
// Only valid when the search space fits in 64 bits.
std::uint64_t packet_rank(const PacketSchema& schema, const Packet& packet);
Packet packet_from_rank(const PacketSchema& schema, std::uint64_t rank);

// Built-in search spaces.
PacketSchema dns_schema();
PacketSchema fivetuple_schema();
PacketSchema toy_schema(std::size_t binary_fields);
// "dns", "fivetuple" or "toy-<n>".
PacketSchema builtin_schema(std::string_view name);

// JSON schema files: {"name": ..., "fields": [{"name", "cardinality", "labels"?}, ...]}
PacketSchema load_schema(const std::filesystem::path& path);
void save_schema(const std::filesystem::path& path, const PacketSchema& schema);
// A built-in name if it resolves to one, otherwise a schema file path.
PacketSchema resolve_schema(const std::string& name_or_path);

// Packets as comma-separated category indices, one packet per line.
std::string format_packet(const Packet& packet);
Packet parse_packet(const PacketSchema& schema, std::string_view line);
void write_packets(std::ostream& out, std::span<const Packet> packets);
std::vector<Packet> read_packets(std::istream& in, const PacketSchema& schema);

}  // namespace raregan
