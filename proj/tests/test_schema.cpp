#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "raregan/errors.hpp"
#include "raregan/schema.hpp"

using namespace raregan;
using boost::multiprecision::cpp_int;

TEST_CASE("field validation") {
    CHECK_THROWS_AS(PacketSchema({{"x", 1, {}}}, "bad"), InvalidArgument);
    CHECK_THROWS_AS(PacketSchema({}, "empty"), InvalidArgument);
    CHECK_THROWS_AS(PacketSchema({{"x", 2, {"a", "a"}}}, "dup"), InvalidArgument);
    CHECK_THROWS_AS(PacketSchema({{"x", 3, {"a", "b"}}}, "count"), InvalidArgument);
    CHECK_NOTHROW(PacketSchema({{"x", 2, {"a", "b"}}}, "ok"));
}

TEST_CASE("encode examples") {
    const PacketSchema one({{"b", 2, {}}}, "one");
    CHECK(encode(one, Packet{{1}}) == std::vector<double>{0, 1});
    CHECK_THROWS_AS(encode(one, Packet{{2}}), InvalidArgument);
    CHECK_THROWS_AS(encode(one, Packet{{0, 1}}), DimensionMismatch);

    const PacketSchema dns = dns_schema();
    // The 16-bit id occupies the first 32 columns as 16 one-hot pairs.
    Packet p;
    p.values.assign(dns.fields().size(), 0);
    for (std::size_t i = 0; i < 16; ++i) p.values[i] = i % 2;
    const auto v = encode(dns, p);
    CHECK(v.size() == dns.encoded_width());
    for (std::size_t i = 0; i < 16; ++i) {
        CHECK(v[2 * i] + v[2 * i + 1] == 1.0);
        CHECK(v[2 * i + (i % 2)] == 1.0);
    }
}

TEST_CASE("decode takes the per-field argmax with lowest-index ties") {
    const PacketSchema s({{"a", 2, {}}, {"b", 3, {}}}, "s");
    CHECK(decode(s, std::vector<double>{0.9, 0.1, 0.2, 0.2, 0.6}).values == std::vector<std::uint32_t>{0, 2});
    CHECK(decode(s, std::vector<double>{0.5, 0.5, 0.4, 0.4, 0.2}).values == std::vector<std::uint32_t>{0, 0});
    CHECK_THROWS_AS(decode(s, std::vector<double>{0.5, 0.5, 0.4}), DimensionMismatch);
    CHECK_THROWS(decode(s, std::vector<double>{0.5, NAN, 0.4, 0.4, 0.2}));
}

TEST_CASE("encode and decode are inverse on random packets") {
    Rng rng(1);
    for (const PacketSchema& s : {dns_schema(), fivetuple_schema(), toy_schema(12)}) {
        for (int i = 0; i < 1000; ++i) {
            const Packet p = sample_uniform(s, rng);
            const auto v = encode(s, p);
            CHECK(decode(s, v) == p);
            CHECK(encode(s, decode(s, v)) == v);
        }
    }
}

TEST_CASE("search space sizes") {
    CHECK(search_space_size(PacketSchema({{"b", 2, {}}}, "one")) == 2);
    const cpp_int dns = search_space_size(dns_schema());
    CHECK(dns == cpp_int("363102719956746240"));
    CHECK(dns >= cpp_int("360000000000000000"));
    CHECK(dns <= cpp_int("370000000000000000"));
    CHECK(search_space_size(fivetuple_schema()) == (cpp_int(1) << 103));
    CHECK(search_space_size(toy_schema(12)) == 4096);
}

TEST_CASE("shipped schema shapes") {
    const PacketSchema dns = dns_schema();
    std::size_t opcode = 0, rdatatype = 0, rdataclass = 0, url = 0;
    for (const FieldSpec& f : dns.fields()) {
        if (f.name == "opcode") opcode = f.cardinality;
        if (f.name == "rdatatype") rdatatype = f.cardinality;
        if (f.name == "rdataclass") rdataclass = f.cardinality;
        if (f.name == "url") url = f.cardinality;
    }
    CHECK(opcode == 6);
    CHECK(rdatatype == 43);
    CHECK(rdataclass == 4);
    CHECK(url == 10);
    CHECK(fivetuple_schema().fields().size() == 103);
    CHECK(fivetuple_schema().encoded_width() == 206);
}

TEST_CASE("uniform sampling: binary frequency and per-field chi-square") {
    Rng rng(2);
    const PacketSchema one({{"b", 2, {}}}, "one");
    std::size_t ones = 0;
    for (int i = 0; i < 100000; ++i) ones += sample_uniform(one, rng).values[0];
    CHECK(ones >= 49000);
    CHECK(ones <= 51000);

    const PacketSchema s({{"a", 2, {}}, {"b", 3, {}}, {"c", 6, {}}, {"d", 43, {}}, {"e", 10, {}}}, "mix");
    const std::size_t n = 100000;
    std::vector<std::vector<std::size_t>> counts;
    for (const FieldSpec& f : s.fields()) counts.emplace_back(f.cardinality, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const Packet p = sample_uniform(s, rng);
        for (std::size_t f = 0; f < p.values.size(); ++f) ++counts[f][p.values[f]];
    }
    for (const auto& c : counts) {
        const double expect = static_cast<double>(n) / static_cast<double>(c.size());
        double stat = 0.0;
        for (std::size_t k : c) stat += (static_cast<double>(k) - expect) * (static_cast<double>(k) - expect) / expect;
        const boost::math::chi_squared dist(static_cast<double>(c.size() - 1));
        CHECK(stat < boost::math::quantile(dist, 0.999));
    }
}

TEST_CASE("sampling is reproducible for a fixed seed") {
    Rng a(42), b(42);
    const PacketSchema s = dns_schema();
    for (int i = 0; i < 100; ++i) CHECK(sample_uniform(s, a) == sample_uniform(s, b));
}

TEST_CASE("rank is a bijection on a small space") {
    const PacketSchema s({{"a", 3, {}}, {"b", 2, {}}, {"c", 4, {}}}, "small");
    for (std::uint64_t r = 0; r < 24; ++r) CHECK(packet_rank(s, packet_from_rank(s, r)) == r);
    CHECK_THROWS(packet_from_rank(s, 24));
}

TEST_CASE("schema file round trip and resolution") {
    const auto dir = std::filesystem::temp_directory_path() / "raregan_schema_test";
    std::filesystem::create_directories(dir);
    const PacketSchema s({{"proto", 3, {"tcp", "udp", "icmp"}}, {"flag", 2, {}}}, "custom");
    save_schema(dir / "s.json", s);
    const PacketSchema back = load_schema(dir / "s.json");
    CHECK(back.name() == "custom");
    CHECK(back.same_layout(s));
    CHECK(back.fields()[0].labels == s.fields()[0].labels);
    CHECK(resolve_schema((dir / "s.json").string()).same_layout(s));
    CHECK(resolve_schema("toy-5").fields().size() == 5);
    try {
        resolve_schema((dir / "missing.json").string());
        FAIL("expected an error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("missing.json") != std::string::npos);
    }
    std::ofstream(dir / "bad.json") << R"({"name": "x", "fields": [{"name": "a", "cardinality": 1}]})";
    CHECK_THROWS(load_schema(dir / "bad.json"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("packet text round trip") {
    const PacketSchema s = toy_schema(4);
    const std::vector<Packet> ps{Packet{{0, 1, 1, 0}}, Packet{{1, 1, 1, 1}}};
    std::stringstream ss;
    write_packets(ss, ps);
    std::stringstream in("# comment\n" + ss.str());
    CHECK(read_packets(in, s) == ps);
    CHECK(format_packet(ps[0]) == "0,1,1,0");
    CHECK_THROWS(parse_packet(s, "0,1,2,0"));
    CHECK_THROWS(parse_packet(s, "0,1"));
}
