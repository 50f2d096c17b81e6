// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "fedalt/lora.hpp"

namespace fedalt {

/// Server aggregation behavior. The last four are ablation variants.
enum class Strategy {
    FedALT,
    FedIT,      // FedAvg over both adapter matrices
    FFA,        // shared frozen A, average B only
    FedSA,      // average A only, B stays local
    LocalOnly,
    RoWUpdate,     // rest-of-world adapter also trained locally
    FixedWeight,   // fedalt composition with constant alpha, no mixer
    AvgMixer,      // fedalt with the mixer averaged across clients
    GlobalAvgRoW,  // rest-of-world replaced by the global average incl. self
};

inline std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::FedALT: return "FedALT";
        case Strategy::FedIT: return "FedIT";
        case Strategy::FFA: return "FFA";
        case Strategy::FedSA: return "FedSA";
        case Strategy::LocalOnly: return "LocalOnly";
        case Strategy::RoWUpdate: return "RoWUpdate";
        case Strategy::FixedWeight: return "FixedWeight";
        case Strategy::AvgMixer: return "AvgMixer";
        case Strategy::GlobalAvgRoW: return "GlobalAvgRoW";
    }
    throw Error("strategy_name: bad tag");
}

inline Strategy parse_strategy(const std::string& name) {
    for (Strategy s : {Strategy::FedALT, Strategy::FedIT, Strategy::FFA, Strategy::FedSA,
                       Strategy::LocalOnly, Strategy::RoWUpdate, Strategy::FixedWeight,
                       Strategy::AvgMixer, Strategy::GlobalAvgRoW})
        if (strategy_name(s) == name) return s;
    throw Error("unknown strategy '" + name + "'");
}

/// Matrix roles as they appear in checkpoints and wire payloads.
enum class WireRole { A_L, B_L, A_R, B_R, G };

inline std::string wire_role_name(WireRole r) {
    switch (r) {
        case WireRole::A_L: return "A_L";
        case WireRole::B_L: return "B_L";
        case WireRole::A_R: return "A_R";
        case WireRole::B_R: return "B_R";
        case WireRole::G: return "G";
    }
    throw Error("wire_role_name: bad role");
}

inline WireRole parse_wire_role(const std::string& name) {
    for (WireRole r : {WireRole::A_L, WireRole::B_L, WireRole::A_R, WireRole::B_R, WireRole::G})
        if (wire_role_name(r) == name) return r;
    throw Error("unknown matrix role '" + name + "'");
}

struct StrategyTraits {
    LayerMode layer_mode;
    bool train_A, train_B, train_mixer, train_row;
    std::vector<WireRole> upload_roles;
    std::vector<WireRole> broadcast_roles;
    bool needs_peers;  // requires K >= 2
};

inline StrategyTraits strategy_traits(Strategy s) {
    using WR = WireRole;
    switch (s) {
        case Strategy::FedALT:
            return {LayerMode::FedAlt, true, true, true, false, {WR::A_L, WR::B_L}, {WR::A_R, WR::B_R}, true};
        case Strategy::FedIT:
            return {LayerMode::SingleAdapter, true, true, false, false, {WR::A_L, WR::B_L}, {WR::A_L, WR::B_L}, true};
        case Strategy::FFA:
            return {LayerMode::SingleAdapter, false, true, false, false, {WR::B_L}, {WR::B_L}, true};
        case Strategy::FedSA:
            return {LayerMode::SingleAdapter, true, true, false, false, {WR::A_L}, {WR::A_L}, true};
        case Strategy::LocalOnly:
            return {LayerMode::SingleAdapter, true, true, false, false, {}, {}, false};
        case Strategy::RoWUpdate:
            return {LayerMode::FedAlt, true, true, true, true, {WR::A_R, WR::B_R}, {WR::A_R, WR::B_R}, true};
        case Strategy::FixedWeight:
            return {LayerMode::FixedWeight, true, true, false, false, {WR::A_L, WR::B_L}, {WR::A_R, WR::B_R}, true};
        case Strategy::AvgMixer:
            return {LayerMode::FedAlt, true, true, true, false,
                    {WR::A_L, WR::B_L, WR::G}, {WR::A_R, WR::B_R, WR::G}, true};
        case Strategy::GlobalAvgRoW:
            return {LayerMode::FedAlt, true, true, true, false, {WR::A_L, WR::B_L}, {WR::A_R, WR::B_R}, true};
    }
    throw Error("strategy_traits: bad tag");
}

/// Trainable parameters contributed by one adapted l x d layer of rank r.
/// FedIT/FedSA/LocalOnly train the full pair r(d+l); FFA trains B only (r*l);
/// the fedalt composition adds the 2d mixer on top of the individual pair.
inline long long trainable_per_layer(Strategy s, int d, int l, int r) {
    const long long pair = static_cast<long long>(r) * (d + l);
    switch (s) {
        case Strategy::FFA: return static_cast<long long>(r) * l;
        case Strategy::FedALT:
        case Strategy::AvgMixer:
        case Strategy::GlobalAvgRoW: return pair + 2LL * d;
        case Strategy::RoWUpdate: return 2LL * pair + 2LL * d;
        case Strategy::FixedWeight: return pair;
        default: return pair;
    }
}

/// Every parameter held by one adapted layer under the strategy, frozen ones
/// included (base, both adapters where present, mixer where present).
inline long long total_per_layer(Strategy s, int d, int l, int r) {
    const StrategyTraits t = strategy_traits(s);
    long long total = static_cast<long long>(d) * l + static_cast<long long>(r) * (d + l);
    if (t.layer_mode != LayerMode::SingleAdapter) total += static_cast<long long>(r) * (d + l);
    if (t.layer_mode == LayerMode::FedAlt) total += 2LL * d;
    return total;
}

}  // namespace fedalt
