#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <fstream>

#include "gssl/data.hpp"
#include "gssl/tensor_io.hpp"
#include "support/oracles.hpp"

namespace gssl {
namespace {

namespace fs = std::filesystem;

StoredTensor random_stored(Rng& rng, DType dtype) {
    StoredTensor t;
    t.dtype = dtype;
    const std::size_t rank = rng.uniform_index(4);
    for (std::size_t i = 0; i < rank; ++i) t.shape.push_back(1 + rng.uniform_index(5));
    t.values.resize(shape_numel(t.shape));
    for (auto& v : t.values) {
        switch (dtype) {
            case DType::f32: v = static_cast<float>(rng.normal() * 100.0); break;
            case DType::f64: v = rng.normal() * 1e6; break;
            case DType::u8: v = static_cast<double>(rng.uniform_index(256)); break;
            case DType::i32: v = static_cast<double>(static_cast<std::int32_t>(rng.next())); break;
        }
    }
    return t;
}

TEST(Gtsr, ScalarRoundTrip) {
    const StoredTensor s{DType::f64, {}, {3.25}};
    EXPECT_EQ(decode_tensor(encode_tensor(s)), s);
}

TEST(Gtsr, ImageRoundTripsByteIdentically) {
    Rng rng(1);
    StoredTensor img{DType::u8, {3, 64, 64}, std::vector<double>(3 * 64 * 64)};
    for (auto& v : img.values) v = static_cast<double>(rng.uniform_index(256));
    const auto bytes = encode_tensor(img);
    EXPECT_EQ(bytes.size(), 4u + 3u + 3u * 8u + 3u * 64u * 64u);
    EXPECT_EQ(encode_tensor(decode_tensor(bytes)), bytes);
    EXPECT_EQ(decode_tensor(bytes), img);
}

TEST(Gtsr, HeaderLayout) {
    const auto bytes = encode_tensor({DType::i32, {2}, {1, -1}});
    ASSERT_EQ(bytes.size(), 4u + 3u + 8u + 8u);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "GTSR");
    EXPECT_EQ(bytes[4], kGtsrVersion);
    EXPECT_EQ(bytes[5], static_cast<std::uint8_t>(DType::i32));
    EXPECT_EQ(bytes[6], 1);
    EXPECT_EQ(bytes[7], 2);
    for (int i = 8; i < 15; ++i) EXPECT_EQ(bytes[i], 0);
    EXPECT_EQ(bytes[15], 1);
    EXPECT_EQ(bytes[19], 0xFF);
}

TEST(Gtsr, CorruptionErrorsNameOffset) {
    auto bytes = encode_tensor({DType::f32, {2, 2}, {1, 2, 3, 4}});
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    try {
        decode_tensor(bad_magic);
        FAIL() << "expected a throw";
    } catch (const std::runtime_error& ex) {
        EXPECT_NE(std::string(ex.what()).find("offset 0"), std::string::npos) << ex.what();
    }
    auto bad_version = bytes;
    bad_version[4] = 9;
    EXPECT_THROW(decode_tensor(bad_version), std::runtime_error);
    const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.end() - 3);
    try {
        decode_tensor(truncated);
        FAIL() << "expected a throw";
    } catch (const std::runtime_error& ex) {
        EXPECT_NE(std::string(ex.what()).find("offset"), std::string::npos) << ex.what();
    }
}

TEST(Gtsr, RejectsUnrepresentableValues) {
    EXPECT_THROW(encode_tensor({DType::u8, {1}, {256}}), std::invalid_argument);
    EXPECT_THROW(encode_tensor({DType::i32, {1}, {0.5}}), std::invalid_argument);
}

TEST(Gtsr, RandomRoundTripsForEveryDtype) {
    Rng rng(2);
    const fs::path dir = testing::temp_dir("gtsr");
    for (DType dtype : {DType::f32, DType::f64, DType::u8, DType::i32}) {
        for (int trial = 0; trial < 50; ++trial) {
            const StoredTensor t = random_stored(rng, dtype);
            EXPECT_EQ(decode_tensor(encode_tensor(t)), t);
            write_tensor(dir / "t.gt", t);
            EXPECT_EQ(read_tensor(dir / "t.gt"), t);
        }
    }
    fs::remove_all(dir);
}

DomainSpec small_spec() {
    DomainSpec s;
    s.n_images = 6;
    s.extent = 32;
    s.seed = 11;
    return s;
}

TEST(Generate, DeterministicPerSpec) {
    const Dataset a = generate_domain(small_spec());
    const Dataset b = generate_domain(small_spec());
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(to_stored(a.images[i], DType::u8), to_stored(b.images[i], DType::u8));
        EXPECT_EQ(a.labels[i], b.labels[i]);
    }
}

TEST(Generate, RejectsSmallExtent) {
    DomainSpec s = small_spec();
    s.extent = 8;
    EXPECT_THROW(generate_domain(s), std::invalid_argument);
}

TEST(Generate, UnknownObjectsOnlyWhenRequested) {
    DomainSpec s = small_spec();
    s.n_images = 100;
    const Dataset plain = generate_domain(s);
    for (const auto& l : plain.labels)
        for (auto v : l) ASSERT_LT(v, 4);
    s.include_ood = true;
    const Dataset ood = generate_domain(s);
    EXPECT_EQ(ood.k_total, 5u);
    for (const auto& l : ood.labels) {
        EXPECT_TRUE(std::any_of(l.begin(), l.end(), [](std::int32_t v) { return v >= 4; }));
    }
}

TEST(Generate, LabelsReRenderFromGeometry) {
    DomainSpec s = small_spec();
    s.include_ood = true;
    s.n_images = 20;
    const Dataset d = generate_domain(s);
    for (std::size_t i = 0; i < d.size(); ++i) {
        EXPECT_EQ(render_labels(d.geometry[i], d.extent, d.k_known), d.labels[i]);
    }
}

// Per-channel 16-bin histograms over a whole dataset, normalized.
std::array<std::array<double, 16>, 3> histograms(const Dataset& d) {
    std::array<std::array<double, 16>, 3> h{};
    double total = 0.0;
    for (const auto& img : d.images) {
        const std::size_t plane = img.numel() / 3;
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < plane; ++i)
                h[c][std::min<std::size_t>(15, static_cast<std::size_t>(img.data()[c * plane + i] * 16))] += 1.0;
        total += static_cast<double>(plane);
    }
    for (auto& ch : h)
        for (auto& v : ch) v /= total;
    return h;
}

double histogram_distance(const Dataset& a, const Dataset& b) {
    const auto ha = histograms(a), hb = histograms(b);
    double d = 0.0;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t k = 0; k < 16; ++k) d += std::abs(ha[c][k] - hb[c][k]);
    return d / 3.0;
}

TEST(Generate, ZeroShiftMatchesSourceHistogram) {
    DomainSpec source = small_spec();
    source.n_images = 100;
    DomainSpec same = source;
    same.seed = 12345;
    DomainSpec shifted = same;
    shifted.style.shift = 1.0;
    const Dataset a = generate_domain(source);
    const double d_same = histogram_distance(a, generate_domain(same));
    const double d_shift = histogram_distance(a, generate_domain(shifted));
    EXPECT_LT(d_same, 0.1);
    EXPECT_GT(d_shift, 3.0 * d_same);
}

TEST(Dataset, SaveLoadRoundTrip) {
    DomainSpec s = small_spec();
    s.include_ood = true;
    const Dataset d = generate_domain(s);
    const fs::path dir = testing::temp_dir("dataset");
    save_dataset(d, dir);
    const Dataset l = load_dataset(dir);
    EXPECT_EQ(l.name, d.name);
    EXPECT_EQ(l.k_total, d.k_total);
    EXPECT_EQ(l.style, d.style);
    ASSERT_EQ(l.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        EXPECT_EQ(std::vector<double>(l.images[i].data().begin(), l.images[i].data().end()),
                  std::vector<double>(d.images[i].data().begin(), d.images[i].data().end()));
        EXPECT_EQ(l.labels[i], d.labels[i]);
        EXPECT_EQ(l.geometry[i], d.geometry[i]);
    }
    fs::remove_all(dir);
}

TEST(Dataset, MissingLabelsGiveUnlabelledStream) {
    const Dataset d = generate_domain(small_spec());
    const fs::path dir = testing::temp_dir("unlabelled");
    save_dataset(d, dir);
    fs::remove_all(dir / "labels");
    const Dataset l = load_dataset(dir);
    EXPECT_FALSE(l.has_labels());
    EXPECT_EQ(l.size(), d.size());
    fs::remove_all(dir);
}

TEST(Dataset, OutOfRangeLabelRejected) {
    const Dataset d = generate_domain(small_spec());
    const fs::path dir = testing::temp_dir("badlabel");
    save_dataset(d, dir);
    StoredTensor lab = read_tensor(dir / "labels" / "00000.gt");
    lab.values[0] = static_cast<double>(d.k_total);
    write_tensor(dir / "labels" / "00000.gt", lab);
    EXPECT_THROW(load_dataset(dir), std::runtime_error);
    fs::remove_all(dir);
}

TEST(Dataset, LabelCountMismatchRejected) {
    const Dataset d = generate_domain(small_spec());
    const fs::path dir = testing::temp_dir("mismatch");
    save_dataset(d, dir);
    fs::remove(dir / "labels" / "00003.gt");
    EXPECT_THROW(load_dataset(dir), std::runtime_error);
    fs::remove_all(dir);
}

}  // namespace
}  // namespace gssl
