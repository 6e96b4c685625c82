// SPDX-License-Identifier: Apache-2.0
//
// JSON layout of one adapter site:
//
//   {
//     "site_id": "L0.q", "d": 16, "n": 16, "r": 3,
//     "alpha": 16.0, "epsilon": 1e-06,
//     "A": {"rows": 3, "cols": 16, "data": [...]},   // row-major
//     "B": {...}, "L": {...}, "U": {...},
//     "norm_record": {"prev_norm": 0.013, "prev_rank": 1},
//     "transform_trainable": true,
//     "denominator": 0.0                              // optional, 0 when absent
//   }
//
// Floats are written in shortest round-trip decimal form, so a save/load
// cycle reproduces every payload bit. W0 is not part of the record; restore()
// takes it from the frozen model.

#pragma once

#include "json.hpp"

#include "triadapt/adapter.hpp"

namespace triadapt {

struct AdapterRecord {
    SiteId site;
    int d = 0;
    int n = 0;
    int r = 0;
    double alpha = 0.0;
    double epsilon = 0.0;
    Matrix a{1, 1};
    Matrix b{1, 1};
    Matrix l{1, 1};
    Matrix u{1, 1};
    NormRecord norm_record;
    bool transform_trainable = true;
    double denominator = 0.0;
};

AdapterRecord make_record(const AdapterState& state);

/// Rebuilds a state around `w0`; throws DimensionError if w0 does not match (d, n).
AdapterState restore(const AdapterRecord& record, Matrix w0);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

nlohmann::json to_json(const AdapterRecord& record);
/// Parses and shape-checks a record. Throws IoError on malformed input.
AdapterRecord record_from_json(const nlohmann::json& j);

}  // namespace triadapt
