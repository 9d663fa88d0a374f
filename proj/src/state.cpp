#include "confeval/error.hpp"
#include "confeval/evaluator.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace confeval {

using nlohmann::json;

json CalibratedEvaluator::to_json() const {
    if (!calibrated()) throw StateError("cannot serialize an uncalibrated evaluator");
    json folds = json::array();
    for (const auto& f : folds_) {
        json jf = {{"model", f.model->to_json()}, {"context", f.context->to_json()}, {"pools", f.pools}};
        jf["normalizer"] = f.normalizer.reference();
        jf["thresholds"] = f.thresholds ? thresholds_to_json(*f.thresholds, labels_) : json(nullptr);
        folds.push_back(std::move(jf));
    }
    json j = {{"format", kStateFormat},
              {"version", kStateVersion},
              {"kind", evaluator_kind_name(kind_)},
              {"labels", labels_.names()},
              {"dimensionality", dimensionality_},
              {"ncm", {{"name", ncm_name_}, {"options", ncm_options_}}},
              {"quality", quality_name(quality_)},
              {"seed", seed_},
              {"quorum", quorum_},
              {"folds", std::move(folds)}};
    j["thresholds"] = thresholds_ ? thresholds_to_json(*thresholds_, labels_) : json(nullptr);
    return j;
}

CalibratedEvaluator CalibratedEvaluator::from_json(const json& j) {
    if (!j.is_object() || !j.contains("format") || j.at("format") != kStateFormat) {
        throw IntegrityError("not an evaluator state document");
    }
    if (!j.contains("version") || !j.at("version").is_number_integer() || j.at("version").get<int>() != kStateVersion) {
        throw StateError("evaluator state version " + (j.contains("version") ? j.at("version").dump() : "<missing>") +
                         " is not supported (expected " + std::to_string(kStateVersion) + ")");
    }
    try {
        CalibratedEvaluator ev;
        ev.kind_ = evaluator_kind_from_name(j.at("kind").get<std::string>());
        ev.labels_ = LabelSpace(j.at("labels").get<std::vector<std::string>>());
        ev.dimensionality_ = j.at("dimensionality").get<std::size_t>();
        ev.ncm_name_ = j.at("ncm").at("name").get<std::string>();
        ev.ncm_options_ = j.at("ncm").at("options");
        ev.quality_ = quality_from_name(j.at("quality").get<std::string>());
        ev.seed_ = j.at("seed").get<std::uint64_t>();
        ev.quorum_ = j.at("quorum").get<std::size_t>();

        NcmOptions nopt;
        if (ev.ncm_options_.contains("k")) nopt.k = ev.ncm_options_.at("k").get<std::size_t>();
        const auto ncm = make_ncm(ev.ncm_name_, nopt);
        const std::size_t nc = ev.labels_.size();

        for (const auto& jf : j.at("folds")) {
            FoldState f;
            f.model = model_from_json(jf.at("model"));
            if (f.model->labels() != ev.labels_) throw IntegrityError("fold model label space differs from the state's");
            f.context = ncm->restore(jf.at("context"), f.model);
            f.pools = jf.at("pools").get<std::vector<std::vector<double>>>();
            if (f.pools.size() != nc) throw IntegrityError("pool count does not match the label space");
            for (const auto& p : f.pools) {
                if (!std::is_sorted(p.begin(), p.end())) throw IntegrityError("pools must be sorted");
                if (p.empty() && ev.quality_ != QualityMetric::RawProbability) {
                    throw IntegrityError("empty calibration pool");
                }
            }
            f.normalizer = RankNormalizer(jf.at("normalizer").get<std::vector<std::vector<double>>>());
            if (!jf.at("thresholds").is_null()) f.thresholds = thresholds_from_json(jf.at("thresholds"), ev.labels_);
            ev.folds_.push_back(std::move(f));
        }
        if (!j.at("thresholds").is_null()) ev.thresholds_ = thresholds_from_json(j.at("thresholds"), ev.labels_);

        if (ev.folds_.empty()) throw IntegrityError("evaluator state has no folds");
        if (ev.kind_ == EvaluatorKind::Cce) {
            if (ev.folds_.size() < 2) throw IntegrityError("CCE state needs at least two folds");
            if (ev.quorum_ < 1 || ev.quorum_ > ev.folds_.size()) throw IntegrityError("CCE quorum out of range");
            for (const auto& f : ev.folds_) {
                if (!f.thresholds) throw IntegrityError("CCE fold without thresholds");
            }
        } else {
            if (ev.folds_.size() != 1) throw IntegrityError("non-CCE state must hold exactly one scoring context");
            if (!ev.thresholds_) throw IntegrityError("evaluator state has no thresholds");
        }
        return ev;
    } catch (const json::exception& e) {
        throw IntegrityError(std::string("malformed evaluator state: ") + e.what());
    } catch (const ConfigError& e) {
        throw IntegrityError(std::string("malformed evaluator state: ") + e.what());
    } catch (const DomainError& e) {
        throw IntegrityError(std::string("malformed evaluator state: ") + e.what());
    }
}

void CalibratedEvaluator::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IntegrityError("cannot write '" + path.string() + "'");
    out << to_json().dump(1) << '\n';
    if (!out) throw IntegrityError("failed writing '" + path.string() + "'");
}

CalibratedEvaluator CalibratedEvaluator::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IntegrityError("cannot read '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    json j;
    try {
        j = json::parse(buf.str());
    } catch (const json::parse_error& e) {
        throw IntegrityError("evaluator state '" + path.string() + "' is corrupted: " + e.what());
    }
    return from_json(j);
}

}  // namespace confeval
