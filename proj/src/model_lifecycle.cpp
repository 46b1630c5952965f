#include "rbf/model_lifecycle.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <sstream>

#include "rbf/error.hpp"

namespace rbf {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

} // namespace

std::string_view to_string(ModelType t) noexcept {
    switch (t) {
    case ModelType::Pinn: return "pinn";
    case ModelType::Fno: return "fno";
    case ModelType::Pcr: return "pcr";
    }
    return "unknown";
}

ModelType parse_model_type(std::string_view s) {
    const std::string l = lower(s);
    for (ModelType t : kAllModelTypes) {
        if (l == to_string(t)) return t;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown model type '" + std::string(s) + "'");
}

std::string_view to_string(Tier t) noexcept {
    return t == Tier::Dedicated ? "dedicated" : "opportunistic";
}

Tier parse_tier(std::string_view s) {
    const std::string l = lower(s);
    if (l == "dedicated") return Tier::Dedicated;
    if (l == "opportunistic") return Tier::Opportunistic;
    throw Error(ErrorCode::InvalidArgument, "unknown tier '" + std::string(s) + "'");
}

std::string_view to_string(DeployDecision d) noexcept {
    return d == DeployDecision::Deployed ? "deployed" : "skipped_stale";
}

std::string encode_metadata(const ModelMetadata& m) {
    // nlohmann::json objects are std::map backed, so dump() is key-sorted.
    nlohmann::json j;
    j["model_type"] = to_string(m.model_type);
    j["cutoff_time_ms"] = ms_of(m.cutoff_time);
    j["produced_time_ms"] = ms_of(m.produced_time);
    j["source_tier"] = to_string(m.source_tier);
    j["history_window_h"] = m.history_window_h;
    j["size_bytes"] = m.size_bytes;
    return j.dump();
}

ModelMetadata decode_metadata(std::string_view text) {
    try {
        const auto j = nlohmann::json::parse(text);
        if (!j.is_object() || j.size() != 6) throw Error(ErrorCode::Malformed, "metadata must have exactly 6 fields");
        ModelMetadata m;
        m.model_type = parse_model_type(j.at("model_type").get<std::string>());
        m.cutoff_time = at_ms(j.at("cutoff_time_ms").get<std::int64_t>());
        m.produced_time = at_ms(j.at("produced_time_ms").get<std::int64_t>());
        m.source_tier = parse_tier(j.at("source_tier").get<std::string>());
        m.history_window_h = j.at("history_window_h").get<double>();
        m.size_bytes = j.at("size_bytes").get<std::uint64_t>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Malformed, std::string("metadata: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::Malformed) throw;
        throw Error(ErrorCode::Malformed, e.what());
    }
}

void ModelArtifact::validate() const {
    if (meta.cutoff_time > meta.produced_time) {
        throw Error(ErrorCode::InvalidArgument, "cutoff_time is after produced_time");
    }
    if (meta.size_bytes != content.size()) {
        throw Error(ErrorCode::InvalidArgument, "size_bytes " + std::to_string(meta.size_bytes) +
                                                    " != content length " + std::to_string(content.size()));
    }
}

std::string model_file_name(ModelType t) { return "model/" + std::string(to_string(t)); }

std::string model_meta_file_name(ModelType t) { return model_file_name(t) + "/meta"; }

namespace {

std::uint32_t latest_or_zero(Repository& repo, const std::string& name) {
    try {
        return repo.latest_version(name).version;
    } catch (const Error& e) {
        if (e.code() == ErrorCode::UnknownFile) return 0;
        throw;
    }
}

} // namespace

FileVersion publish_model(Repository& repo, const ModelArtifact& artifact) {
    artifact.validate();
    const std::string content_name = model_file_name(artifact.meta.model_type);
    const std::string meta_name = model_meta_file_name(artifact.meta.model_type);
    const std::uint32_t before = latest_or_zero(repo, content_name);
    if (latest_or_zero(repo, meta_name) != before) {
        throw Error(ErrorCode::StorageFailure, content_name + " content and metadata versions disagree");
    }
    const FileVersion v = repo.push_file(content_name, artifact.content);
    const FileVersion mv = repo.push_file(meta_name, to_bytes(encode_metadata(artifact.meta)));
    if (mv.version != v.version) {
        throw Error(ErrorCode::StorageFailure, content_name + " published as v" + std::to_string(v.version) +
                                                   " but metadata landed as v" + std::to_string(mv.version));
    }
    return v;
}

ModelArtifact fetch_model(Repository& repo, ModelType type, std::optional<std::uint32_t> version) {
    const std::string meta_name = model_meta_file_name(type);
    const std::uint32_t v = version ? *version : repo.latest_version(meta_name).version;
    ModelArtifact a;
    a.meta = decode_metadata(to_string(repo.pull_file(meta_name, v)));
    a.content = repo.pull_file(model_file_name(type), v);
    a.artifact_version = v;
    if (a.meta.model_type != type || a.meta.size_bytes != a.content.size()) {
        throw Error(ErrorCode::ChecksumMismatch, model_file_name(type) + " v" + std::to_string(v) +
                                                     " does not match its metadata");
    }
    return a;
}

DeployedSlot::DeployedSlot(const DeployedSlot& other) : type_(other.type_) {
    std::lock_guard lock(other.mu_);
    current_ = other.current_;
    current_version_ = other.current_version_;
    history_ = other.history_;
}

DeployedSlot& DeployedSlot::operator=(const DeployedSlot& other) {
    if (this == &other) return *this;
    std::scoped_lock lock(mu_, other.mu_);
    type_ = other.type_;
    current_ = other.current_;
    current_version_ = other.current_version_;
    history_ = other.history_;
    return *this;
}

DeployDecision DeployedSlot::maybe_deploy(const ModelArtifact& incoming, Timestamp now) {
    if (incoming.meta.model_type != type_) {
        throw Error(ErrorCode::TypeMismatch, "slot holds " + std::string(to_string(type_)) + ", got " +
                                                 std::string(to_string(incoming.meta.model_type)));
    }
    std::lock_guard lock(mu_);
    if (current_ && incoming.meta.cutoff_time <= current_->cutoff_time) return DeployDecision::SkippedStale;
    current_ = incoming.meta;
    current_version_ = incoming.artifact_version;
    history_.push_back({now, incoming.artifact_version, incoming.meta.cutoff_time, incoming.meta.source_tier});
    return DeployDecision::Deployed;
}

Millis DeployedSlot::model_age(Timestamp now) const {
    std::lock_guard lock(mu_);
    if (!current_) throw Error(ErrorCode::EmptySlot, std::string(to_string(type_)) + " has no deployed model");
    return now - current_->cutoff_time;
}

std::optional<ModelMetadata> DeployedSlot::current() const {
    std::lock_guard lock(mu_);
    return current_;
}

std::optional<std::uint32_t> DeployedSlot::current_version() const {
    std::lock_guard lock(mu_);
    if (!current_) return std::nullopt;
    return current_version_;
}

std::vector<DeployRecord> DeployedSlot::history() const {
    std::lock_guard lock(mu_);
    return history_;
}

std::string DeployedSlot::history_csv() const {
    std::ostringstream out;
    out << "time_ms,version,cutoff_ms,source_tier\n";
    for (const DeployRecord& r : history()) {
        out << ms_of(r.time) << ',' << r.artifact_version << ',' << ms_of(r.cutoff_time) << ','
            << to_string(r.source_tier) << '\n';
    }
    return out.str();
}

} // namespace rbf
