#pragma once

#include "omf/core.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace omf {

/// On-disk encodings of a dense matrix.
///   binary: "OMFMAT01", rows and cols as little-endian uint64, then rows*cols
///           little-endian IEEE doubles in row-major order.
///   text:   "rows cols" followed by rows*cols whitespace-separated values, row-major.
enum class MatrixEncoding { binary, text };

std::string encode_matrix(const MatrixXd& M, MatrixEncoding encoding = MatrixEncoding::binary);

/// Parses either encoding (detected from the magic). Throws DataError on malformed
/// headers, truncated or oversized payloads and non-finite values.
MatrixXd decode_matrix(std::string_view bytes);

void save_matrix(const MatrixXd& M, const std::filesystem::path& path,
                 MatrixEncoding encoding = MatrixEncoding::binary);
MatrixXd load_matrix(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

/// 8-bit or 16-bit raster with samples scaled to [0, 1].
struct Image {
    Index width = 0;
    Index height = 0;
    Index channels = 1;
    std::vector<double> samples{};  ///< interleaved, row-major

    double at(Index channel, Index y, Index x) const {
        return samples[static_cast<std::size_t>((y * width + x) * channels + channel)];
    }
};

/// Binary PGM (P5) or PPM (P6).
Image decode_pnm(std::string_view bytes);
Image load_pnm(const std::filesystem::path& path);
std::string encode_pnm(const Image& image);

struct PatchSpec {
    Index edge = 8;
    Index stride = 1;
    Index channels = 1;

    Index dimension() const { return edge * edge * channels; }
    void validate() const;
};

/// Samples patch positions uniformly without replacement (all of them when
/// max_count <= 0) and flattens each patch channel-major: every sample of channel 0 in
/// row-major order, then channel 1, and so on. A color image read with a one-channel
/// spec is converted to gray by averaging channels.
MatrixXd extract_patches(const Image& image, const PatchSpec& spec, Index max_count, std::uint64_t rng_seed);

/// Patches from every .pgm/.ppm file of a directory (sorted by name), max_per_image each.
MatrixXd extract_patches_from_directory(const std::filesystem::path& dir, const PatchSpec& spec,
                                        Index max_per_image, std::uint64_t rng_seed);

/// Per column: subtract the mean when `center`, then scale to unit l2 norm when
/// `normalize`. Columns of zero norm stay zero.
MatrixXd preprocess(const MatrixXd& X, bool center, bool normalize);

/// Endless stream over the columns of a matrix, one fresh uniform permutation per epoch.
class SampleStream {
   public:
    struct Draw {
        Index index = 0;         ///< column of the source matrix
        long epoch = 0;          ///< 0-based epoch of this draw
        bool starts_epoch = false;
    };

    SampleStream(const MatrixXd& data, std::uint64_t rng_seed);
    /// Stream over the indices 0..n-1 only; data() must not be used.
    SampleStream(Index n, std::uint64_t rng_seed);

    Draw next();
    const MatrixXd& data() const { return *data_; }
    Index size() const { return static_cast<Index>(order_.size()); }

   private:
    void reshuffle();

    const MatrixXd* data_ = nullptr;
    Rng rng_;
    std::vector<Index> order_;
    std::size_t position_ = 0;
    long epoch_ = -1;
};

SampleStream cycle_permuted(const MatrixXd& X, std::uint64_t rng_seed);

struct PlantedData {
    MatrixXd X;      ///< m x n samples
    MatrixXd atoms;  ///< m x k unit-norm ground truth dictionary
    MatrixXd codes;  ///< k x n, each column s-sparse
};

/// x_i = D a_i + sigma * noise with Gaussian atoms normalized to unit norm, supports of
/// size s drawn uniformly and Gaussian coefficients.
PlantedData synth_planted(Index m, Index k, Index n, Index s, double sigma, std::uint64_t rng_seed);

}  // namespace omf
