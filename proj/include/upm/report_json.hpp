#pragma once

// JSON emission for report records. Key order is fixed (ordered_json) so
// sequential-mode payloads are byte-reproducible. Schema version lives in the
// CLI envelope; see the README for the field reference.

#include <json.hpp>

#include "upm/dedup_engine.hpp"
#include "upm/metrics.hpp"
#include "upm/snapshot.hpp"
#include "upm/workload_sim.hpp"

namespace upm {

using Json = nlohmann::ordered_json;

Json to_json(const PhaseTimings& t);
Json to_json(const AdviseReport& r);
Json to_json(const OverheadReport& r);
Json to_json(const MemoryAccounting& a);
Json to_json(const SystemAccounting& a);
Json to_json(const SharingReport& r);
Json to_json(const SubpageHistogram& h);
Json to_json(const PhaseBreakdown& b);
Json to_json(const ScenarioConfig& c);
Json to_json(const ScenarioReport& r);
Json to_json(const std::vector<TimingPoint>& curve);
Json to_json(const EngineConfig& c);
EngineConfig engine_config_from_json(const Json& j);

}  // namespace upm
