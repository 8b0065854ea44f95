#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "cumix/synthetic.hpp"
#include "cumix/train.hpp"

namespace cumix {

/// Every key a run configuration document may carry, with defaults.
nlohmann::json default_run_config_json();
/// Every key a synthetic-generator document may carry, with defaults.
nlohmann::json default_synth_config_json();

/// Overlays `overlay` onto `base` key by key. Keys absent from `base` are
/// rejected with a ConfigError naming the dotted path.
void merge_strict(nlohmann::json& base, const nlohmann::json& overlay,
                  const std::string& prefix = "");
/// Applies one "a.b=c" override; the value is parsed as JSON and falls back
/// to a plain string.
void apply_override(nlohmann::json& doc, std::string_view assignment);

RunConfig run_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const RunConfig& cfg);

SynthConfig synth_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const SynthConfig& cfg);

/// Named hyper-parameter presets ("cub", "flo", "awa", "sun", "pacs",
/// "domainnet", "synthetic") as partial run-config documents.
std::vector<std::string> preset_names();
nlohmann::json preset_json(std::string_view name);

nlohmann::json to_json(const EvalResult& r);
/// Report document. With `deterministic` the wall-clock time, timestamp and
/// hostname are left out so identical runs serialize byte-identically.
nlohmann::json to_json(const RunReport& report, bool deterministic);
/// "epoch,loss_agg,loss_mix_img,loss_mix_feat,total,lr,alpha,beta" rows.
std::string epochs_csv(const RunReport& report);

}  // namespace cumix
