#pragma once

#include <optional>
#include <string>

#include "sve/kernel.hpp"
#include "sve/solver.hpp"

namespace sve {

/// Ensemble persistence. CSV layout: a grid-times comment line, a header row
/// `t,particle,component,X,A,M`, then one row per (time, particle, component).
/// Binary layout: little-endian float64, row-major [time][particle][component]
/// x {X, A, M}, described by a JSON descriptor next to it. Both carry a
/// `<stem>.meta.json` sidecar and are byte-reproducible for a fixed config.

struct EnsembleMetadata {
    std::string tool_version;
    std::uint64_t seed = 0;
    std::string mode;
    std::string model_label;
    std::string kernel_b;
    std::string kernel_sigma;
    std::size_t particles = 0;
    std::size_t dim_state = 0;
    std::size_t dim_noise = 0;
    std::vector<double> times;
    std::string certificate_hash; // empty when simulated with --force
    std::string config_echo;      // serialized config, when available
};

void write_ensemble_csv(const ParticleEnsemble& ensemble, const std::string& path);
void write_ensemble_binary(const ParticleEnsemble& ensemble, const std::string& path,
                           const std::string& descriptor_path);
void write_metadata(const EnsembleMetadata& meta, const std::string& path);

/// Loads a CSV or binary ensemble (format detected from the descriptor /
/// header). Increment tables are not serialized; loaded ensembles carry an
/// empty dW block.
ParticleEnsemble read_ensemble(const std::string& path, const std::string& meta_path);

std::string certificate_to_json(const KernelCertificate& cert);
KernelCertificate certificate_from_json(const std::string& text);
void write_certificate(const KernelCertificate& cert, const std::string& path);
KernelCertificate read_certificate(const std::string& path);

/// FNV-1a content hash of a file, hex-encoded; used for certificate hashes.
std::string file_content_hash(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);

/// Shortest round-trip decimal text for a double (deterministic output).
std::string format_double(double v);

} // namespace sve
