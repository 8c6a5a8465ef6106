#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "reidkit/errors.hpp"

namespace reidkit {

// Identity label reserved for junk/distractor samples. Junk entries stay
// in the sample list but never enter the identity index.
inline constexpr int kJunkIdentity = -1;

struct IdentityDataset {
    std::size_t channels = 0, height = 0, width = 0;
    std::vector<std::vector<double>> images;  // channel-major, values in [0,1]
    std::vector<int> identities;
    std::vector<int> cameras;  // empty when the source has no camera labels
    std::map<int, std::vector<std::size_t>> identity_index;
    std::size_t skipped_files = 0;

    bool has_cameras() const { return !cameras.empty(); }
    std::size_t size() const { return images.size(); }
    std::size_t pixels() const { return channels * height * width; }
    void rebuild_index();
};

// Big-endian IDX pair (images magic 0x00000803, labels magic 0x00000801).
// Pixel bytes scale to [0,1].
IdentityDataset load_idx(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path);

// Inverse of load_idx; requires single-channel images and identities in
// [0, 255]. Pixels quantize back to bytes, so a dataset produced by
// load_idx (or any dataset on the 1/255 grid) round-trips bit-exactly.
void write_idx(const IdentityDataset& dataset, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

// Directory of PGM/PPM images named `<pid>_c<camid>...`. pid -1 marks a
// junk entry. Files with unparseable names or unsupported formats are
// skipped, warned about, and counted in `skipped_files`.
IdentityDataset load_image_folder(const std::filesystem::path& root);

// Binary PGM (P5) / PPM (P6), 8-bit. Used by the folder loader and tests.
std::vector<double> read_pnm(const std::filesystem::path& path, std::size_t& channels,
                             std::size_t& height, std::size_t& width);
void write_pnm(const std::filesystem::path& path, const std::vector<double>& image,
               std::size_t channels, std::size_t height, std::size_t width);

struct SyntheticBlobConfig {
    std::size_t num_identities = 2;
    std::size_t samples_per_identity = 8;
    std::size_t channels = 1, height = 8, width = 8;
    double noise_amplitude = 0.05;
    std::uint64_t seed = 0;
};

// Deterministic identity blobs: one random template per identity plus
// seeded noise, quantized to the 1/255 grid so IDX round-trips exactly.
IdentityDataset make_blobs(const SyntheticBlobConfig& cfg);

enum class SplitPolicyKind {
    IdentityDisjoint,  // train and test identities never overlap
    ClassShared,       // every identity in both, disjoint sample indices
};

struct SplitPolicy {
    SplitPolicyKind kind = SplitPolicyKind::IdentityDisjoint;
    double train_fraction = 0.7;          // of identities (disjoint) or samples per identity (shared)
    std::size_t queries_per_identity = 1;
    std::uint64_t seed = 0;
};

struct SplitResult {
    IdentityDataset train, query, gallery;
};

// Query sets never contain junk; junk samples land in the gallery. Every
// query identity keeps at least one gallery sample.
SplitResult split(const IdentityDataset& dataset, const SplitPolicy& policy);

// Splits one labeled set into query/gallery only (used for pre-split
// benchmark test sets): per identity, up to `queries_per_identity` samples
// become queries, the rest gallery.
SplitResult split_query_gallery(const IdentityDataset& test_set, std::size_t queries_per_identity,
                                std::uint64_t seed);

}  // namespace reidkit
