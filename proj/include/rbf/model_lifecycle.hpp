#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rbf/bytes.hpp"
#include "rbf/data_mover.hpp"
#include "rbf/time.hpp"

namespace rbf {

enum class ModelType : std::uint8_t { Pinn, Fno, Pcr };

inline constexpr ModelType kAllModelTypes[] = {ModelType::Pinn, ModelType::Fno, ModelType::Pcr};

/// "pinn", "fno", "pcr".
std::string_view to_string(ModelType t) noexcept;
/// Case-insensitive; throws InvalidArgument.
ModelType parse_model_type(std::string_view s);

enum class Tier : std::uint8_t { Dedicated, Opportunistic };

/// "dedicated", "opportunistic".
std::string_view to_string(Tier t) noexcept;
Tier parse_tier(std::string_view s);

/// Everything about an artifact except its bytes. This is what the sidecar
/// file carries.
struct ModelMetadata {
    ModelType model_type = ModelType::Pinn;
    Timestamp cutoff_time;
    Timestamp produced_time;
    Tier source_tier = Tier::Dedicated;
    double history_window_h = 6.0;
    std::uint64_t size_bytes = 0;

    friend bool operator==(const ModelMetadata&, const ModelMetadata&) = default;
};

/// Canonical encoding: key-sorted compact JSON.
std::string encode_metadata(const ModelMetadata& m);
/// Throws Malformed on anything that is not a complete metadata object.
ModelMetadata decode_metadata(std::string_view text);

struct ModelArtifact {
    ModelMetadata meta;
    Bytes content;
    /// Assigned by the repository on publish; 0 until then.
    std::uint32_t artifact_version = 0;

    /// cutoff <= produced and size_bytes == content size.
    void validate() const;
};

std::string model_file_name(ModelType t);
std::string model_meta_file_name(ModelType t);

/// Pushes content under `model/<type>`, then the metadata sidecar under
/// `model/<type>/meta`. The version becomes visible to fetch_model once the
/// sidecar lands, so both halves appear atomically in version order.
FileVersion publish_model(Repository& repo, const ModelArtifact& artifact);

/// Latest published version (by sidecar) when `version` is empty.
ModelArtifact fetch_model(Repository& repo, ModelType type, std::optional<std::uint32_t> version = std::nullopt);

enum class DeployDecision { Deployed, SkippedStale };

std::string_view to_string(DeployDecision d) noexcept;

struct DeployRecord {
    Timestamp time;
    std::uint32_t artifact_version = 0;
    Timestamp cutoff_time;
    Tier source_tier = Tier::Dedicated;

    friend bool operator==(const DeployRecord&, const DeployRecord&) = default;
};

/// Edge-side slot for one model type. Only artifacts whose cutoff is strictly
/// newer than the current one are deployed, so the deployed cutoff never goes
/// backwards whatever order artifacts arrive in. Decisions on a slot are
/// serialized.
class DeployedSlot {
public:
    explicit DeployedSlot(ModelType type) : type_(type) {}

    DeployedSlot(const DeployedSlot& other);
    DeployedSlot& operator=(const DeployedSlot& other);

    /// Throws TypeMismatch when the artifact is for another model type.
    DeployDecision maybe_deploy(const ModelArtifact& incoming, Timestamp now);

    /// now - cutoff of the deployed artifact. Throws EmptySlot.
    [[nodiscard]] Millis model_age(Timestamp now) const;

    [[nodiscard]] ModelType model_type() const noexcept { return type_; }
    [[nodiscard]] std::optional<ModelMetadata> current() const;
    [[nodiscard]] std::optional<std::uint32_t> current_version() const;
    [[nodiscard]] std::vector<DeployRecord> history() const;

    /// time_ms,version,cutoff_ms,source_tier
    [[nodiscard]] std::string history_csv() const;

private:
    ModelType type_;
    mutable std::mutex mu_;
    // Only metadata is retained; the edge has no use for old bytes once
    // serving has switched.
    std::optional<ModelMetadata> current_;
    std::uint32_t current_version_ = 0;
    std::vector<DeployRecord> history_;
};

} // namespace rbf
