use axum::Json;
use serde_json::{json, Value};

fn body(schema: &str) -> Value {
    json!({"required": true, "content": {"application/json": {"schema": {"$ref": format!("#/components/schemas/{schema}")}}}})
}

fn ok(status: &str, description: &str, schema: &str) -> (String, Value) {
    (
        status.to_string(),
        json!({"description": description, "content": {"application/json": {"schema": {"$ref": format!("#/components/schemas/{schema}")}}}}),
    )
}

fn errors(codes: &[(&str, &str)]) -> Vec<(String, Value)> {
    codes
        .iter()
        .map(|(status, description)| {
            (
                status.to_string(),
                json!({"description": description, "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Error"}}}}),
            )
        })
        .collect()
}

fn responses(mut list: Vec<(String, Value)>, extra: &[(&str, &str)]) -> Value {
    list.extend(errors(extra));
    Value::Object(list.into_iter().collect())
}

fn op(summary: &str, params: &[&str], request: Option<Value>, responses: Value) -> Value {
    let mut o = json!({
        "summary": summary,
        "parameters": params.iter().map(|p| json!({"$ref": format!("#/components/parameters/{p}")})).collect::<Vec<_>>(),
        "responses": responses,
    });
    if let Some(r) = request {
        o["requestBody"] = r;
    }
    o
}

/// OpenAPI 3.0 description of the HTTP API.
pub fn document() -> Value {
    json!({
        "openapi": "3.0.3",
        "info": {
            "title": "edm decision-mining service",
            "version": env!("CARGO_PKG_VERSION"),
            "description": "Discover process models, train decision models per decision point, predict routing decisions of running cases and explain them with Shapley values. Errors are returned as {code, message}."
        },
        "paths": paths(),
        "components": {
            "parameters": {
                "session": {"name": "session", "in": "path", "required": true, "schema": {"type": "string"}},
                "place": {"name": "place", "in": "path", "required": true, "schema": {"type": "string"}},
                "job": {"name": "job", "in": "path", "required": true, "schema": {"type": "string"}}
            },
            "responses": {
                "Error": {"description": "error", "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Error"}}}}
            },
            "schemas": schemas()
        }
    })
}

fn paths() -> Value {
    let dp = ["session", "place"];
    json!({
        "/spec": {"get": op("This document", &[], None, json!({"200": {"description": "OpenAPI document"}}))},
        "/health": {"get": op("Liveness probe", &[], None, json!({"200": {"description": "ok"}}))},
        "/sessions": {
            "post": {
                "summary": "Upload an event log and open a session",
                "requestBody": {"required": true, "content": {
                    "application/json": {"schema": {"$ref": "#/components/schemas/UploadRequest"}},
                    "application/xml": {"schema": {"type": "string", "description": "raw XES document"}}
                }},
                "responses": responses(vec![ok("201", "session created", "SessionCreated")],
                    &[("400", "parse failure, bad CSV mapping or empty log"), ("413", "payload too large")])
            },
            "get": op("List sessions", &[], None, json!({"200": {"description": "sessions",
                "content": {"application/json": {"schema": {"type": "array", "items": {"$ref": "#/components/schemas/Session"}}}}}}))
        },
        "/sessions/{session}": {"get": op("Session manifest", &["session"], None,
            responses(vec![ok("200", "session", "Session")], &[("404", "unknown session")]))},
        "/sessions/{session}/discover": {"post": op("Discover a Petri net with the inductive miner", &["session"], None,
            responses(vec![ok("200", "net and decision points", "Discovered")], &[("404", "unknown session")]))},
        "/sessions/{session}/decision-points": {"get": op("Decision points of the discovered net", &["session"], None,
            json!({"200": {"description": "decision points", "content": {"application/json": {"schema": {"type": "array", "items": {"$ref": "#/components/schemas/DecisionPoint"}}}}},
                   "404": {"$ref": "#/components/responses/Error"}, "409": {"$ref": "#/components/responses/Error"}}))},
        "/sessions/{session}/decision-points/{place}/train": {"post": op("Cross-validate model kinds and train the best one (asynchronous)", &dp,
            Some(body("TrainRequest")),
            responses(vec![ok("202", "job accepted", "JobStatus")], &[("400", "invalid request"), ("404", "unknown session or decision point"), ("409", "net not discovered")]))},
        "/sessions/{session}/decision-points/{place}/report": {"get": op("Cross-validation reports and suggested kind", &dp, None,
            responses(vec![ok("200", "report", "Report")], &[("404", "unknown session, decision point or no model")]))},
        "/sessions/{session}/decision-points/{place}/predict": {"post": op("Predict the decision of a running case", &dp,
            Some(body("Instance")),
            responses(vec![ok("200", "decision mapping", "Prediction")], &[("400", "invalid instance"), ("404", "no model")]))},
        "/sessions/{session}/decision-points/{place}/explain": {"post": op("Shapley explanation of one prediction", &dp,
            Some(body("ExplainRequest")),
            responses(vec![ok("200", "explanation and plot data", "ExplainResponse")],
                &[("400", "invalid instance or target"), ("404", "no model"), ("422", "too many units for exact computation; use sampled"), ("504", "time budget exceeded")]))},
        "/sessions/{session}/decision-points/{place}/global-explanation": {"get": {
            "summary": "Mean absolute Shapley values over training situations",
            "parameters": [
                {"$ref": "#/components/parameters/session"}, {"$ref": "#/components/parameters/place"},
                {"name": "method", "in": "query", "schema": {"type": "string", "enum": ["exact", "sampled"]}},
                {"name": "grouping", "in": "query", "schema": {"type": "string", "enum": ["columns", "by_source"], "default": "by_source"}},
                {"name": "instances", "in": "query", "schema": {"type": "integer", "minimum": 1, "default": 100}},
                {"name": "n_permutations", "in": "query", "schema": {"type": "integer", "minimum": 1}},
                {"name": "seed", "in": "query", "schema": {"type": "integer", "minimum": 0}}
            ],
            "responses": responses(vec![ok("200", "global explanation and plot data", "GlobalResponse")],
                &[("400", "invalid query"), ("404", "no model"), ("422", "too many units for exact computation"), ("504", "time budget exceeded")])
        }},
        "/sessions/{session}/decision-points/{place}/whatif": {"post": op("Compare predictions and explanations before and after overriding features", &dp,
            Some(body("WhatIfRequest")),
            responses(vec![ok("200", "both scenarios and the per-class delta", "WhatIfResponse")],
                &[("400", "unknown feature or invalid instance"), ("404", "no model"), ("422", "too many units"), ("504", "time budget exceeded")]))},
        "/jobs/{job}": {"get": op("Training job status", &["job"], None,
            responses(vec![ok("200", "job status", "JobStatus")], &[("404", "unknown job")]))}
    })
}

fn schemas() -> Value {
    json!({
        "Error": {"type": "object", "required": ["code", "message"], "properties": {
            "code": {"type": "string"}, "message": {"type": "string"}}},
        "UploadRequest": {"type": "object", "required": ["format", "content"], "additionalProperties": false, "properties": {
            "format": {"type": "string", "enum": ["xes", "csv", "json"]},
            "content": {"type": "string"},
            "mapping": {"type": "object", "required": ["case_col", "act_col", "time_col"], "properties": {
                "case_col": {"type": "string"}, "act_col": {"type": "string"}, "time_col": {"type": "string"},
                "time_format": {"type": "string", "nullable": true}, "res_col": {"type": "string", "nullable": true}}}}},
        "SessionCreated": {"type": "object", "required": ["session_id", "schema", "traces", "events", "warnings"], "properties": {
            "session_id": {"type": "string"},
            "schema": {"type": "object", "additionalProperties": {"type": "string", "enum": ["text", "integer", "real", "boolean", "timestamp"]}},
            "traces": {"type": "integer"}, "events": {"type": "integer"},
            "warnings": {"type": "array", "items": {"type": "string"}}}},
        "Session": {"type": "object", "required": ["id", "created_at", "updated_at", "log", "traces", "events", "decision_points"], "properties": {
            "id": {"type": "string"}, "created_at": {"type": "string"}, "updated_at": {"type": "string"},
            "log": {"type": "string", "description": "content hash of the stored log"},
            "traces": {"type": "integer"}, "events": {"type": "integer"},
            "net": {"type": "object", "nullable": true, "properties": {"pnml": {"type": "string"}, "dot": {"type": "string"}}},
            "decision_points": {"type": "object", "additionalProperties": {"type": "object"}}}},
        "Alternative": {"type": "object", "required": ["transition"], "properties": {
            "transition": {"type": "string"}, "label": {"type": "string", "nullable": true}}},
        "DecisionPoint": {"type": "object", "required": ["place", "alternatives", "trained"], "properties": {
            "place": {"type": "string"},
            "alternatives": {"type": "array", "items": {"$ref": "#/components/schemas/Alternative"}},
            "trained": {"type": "boolean"}}},
        "Discovered": {"type": "object", "required": ["session_id", "pnml", "dot", "decision_points"], "properties": {
            "session_id": {"type": "string"}, "pnml": {"type": "string"}, "dot": {"type": "string"},
            "decision_points": {"type": "array", "items": {"$ref": "#/components/schemas/DecisionPoint"}}}},
        "FeatureSpec": {"type": "object", "properties": {
            "case_features": {"type": "array", "items": {"type": "string"}},
            "event_features": {"type": "array", "items": {"type": "string"}, "description": "attribute or attribute@Activity"},
            "performance_features": {"type": "array", "items": {"type": "string", "enum": ["elapsed_time", "time_since_last_event"]}}}},
        "ModelKind": {"type": "string", "enum": ["decision_tree", "svm", "random_forest", "gradient_boosted_trees", "neural_network"]},
        "Params": {"type": "object", "required": ["kind"], "properties": {"kind": {"$ref": "#/components/schemas/ModelKind"}}, "additionalProperties": true},
        "TrainRequest": {"type": "object", "additionalProperties": false, "properties": {
            "feature_spec": {"$ref": "#/components/schemas/FeatureSpec"},
            "kinds": {"type": "array", "items": {"$ref": "#/components/schemas/ModelKind"}},
            "grid": {"type": "object", "additionalProperties": {"type": "array", "items": {"$ref": "#/components/schemas/Params"}}},
            "folds": {"type": "integer", "minimum": 2},
            "seed": {"type": "integer", "minimum": 0},
            "background_size": {"type": "integer", "minimum": 1}}},
        "JobStatus": {"type": "object", "required": ["job_id", "session_id", "decision_point", "state", "progress"], "properties": {
            "job_id": {"type": "string"}, "session_id": {"type": "string"}, "decision_point": {"type": "string"},
            "state": {"type": "string", "enum": ["queued", "running", "done", "failed"]},
            "progress": {"type": "number", "minimum": 0, "maximum": 1},
            "error": {"type": "string"}}},
        "CvReport": {"type": "object", "required": ["kind", "folds", "rows", "fold_f1", "mean_f1", "best_params", "degenerate"], "properties": {
            "kind": {"$ref": "#/components/schemas/ModelKind"}, "folds": {"type": "integer"}, "rows": {"type": "integer"},
            "fold_f1": {"type": "array", "items": {"type": "number"}}, "mean_f1": {"type": "number"},
            "best_params": {"$ref": "#/components/schemas/Params"}, "grid": {"type": "array", "items": {"type": "object"}},
            "degenerate": {"type": "boolean"}, "warnings": {"type": "array", "items": {"type": "string"}}}},
        "Report": {"type": "object", "required": ["session_id", "decision_point", "degenerate", "model", "reports"], "properties": {
            "session_id": {"type": "string"}, "decision_point": {"type": "string"},
            "suggested": {"allOf": [{"$ref": "#/components/schemas/ModelKind"}], "nullable": true},
            "degenerate": {"type": "boolean"}, "trained_at": {"type": "string"},
            "feature_spec": {"$ref": "#/components/schemas/FeatureSpec"},
            "model": {"type": "object", "properties": {
                "kind": {"$ref": "#/components/schemas/ModelKind"}, "params": {"$ref": "#/components/schemas/Params"},
                "training_rows": {"type": "integer"},
                "classes": {"type": "array", "items": {"$ref": "#/components/schemas/Alternative"}}}},
            "reports": {"type": "array", "items": {"$ref": "#/components/schemas/CvReport"}}}},
        "Instance": {"type": "object", "additionalProperties": false, "description": "exactly one of events or features", "properties": {
            "events": {"type": "array", "items": {"type": "object", "required": ["act", "time"], "additionalProperties": true, "properties": {
                "act": {"type": "string"}, "time": {"type": "string", "format": "date-time"}, "res": {"type": "string"}}}},
            "features": {"type": "object", "additionalProperties": {"nullable": true}}}},
        "Prediction": {"type": "object", "required": ["decision_mapping", "argmax", "features"], "properties": {
            "decision_mapping": {"type": "object", "additionalProperties": {"type": "number"}},
            "argmax": {"type": "string"}, "argmax_label": {"type": "string", "nullable": true},
            "features": {"type": "object"}}},
        "MethodOptions": {"type": "object", "properties": {
            "method": {"type": "string", "enum": ["exact", "sampled"], "default": "exact"},
            "n_permutations": {"type": "integer", "minimum": 1},
            "seed": {"type": "integer", "minimum": 0},
            "redistribute": {"type": "boolean"}}},
        "ExplainRequest": {"allOf": [{"$ref": "#/components/schemas/MethodOptions"}, {"type": "object", "required": ["instance"], "properties": {
            "instance": {"$ref": "#/components/schemas/Instance"},
            "target": {"type": "string"},
            "grouping": {"type": "string", "enum": ["columns", "by_source"], "default": "columns"}}}]},
        "Attribution": {"type": "object", "required": ["name", "value"], "properties": {
            "name": {"type": "string"}, "value": {"type": "number"}, "feature_value": {"type": "string"}, "se": {"type": "number"}}},
        "ShapExplanation": {"type": "object", "required": ["target", "base_value", "predicted_value", "attributions", "method"], "properties": {
            "target": {"type": "string"}, "base_value": {"type": "number"}, "predicted_value": {"type": "number"},
            "attributions": {"type": "array", "items": {"$ref": "#/components/schemas/Attribution"}},
            "method": {"type": "string", "enum": ["exact", "sampled"]},
            "grouping": {"type": "string"}, "n_permutations": {"type": "integer"}, "seed": {"type": "integer"},
            "residual_redistributed": {"type": "boolean"}}},
        "PlotBundle": {"type": "object", "required": ["bar"], "properties": {
            "bar": {"type": "object"}, "force": {"type": "object"}, "decision": {"type": "object"},
            "beeswarm": {"type": "array", "items": {"type": "object"}}}},
        "ExplainResponse": {"type": "object", "required": ["explanation", "plots"], "properties": {
            "explanation": {"$ref": "#/components/schemas/ShapExplanation"},
            "plots": {"$ref": "#/components/schemas/PlotBundle"}}},
        "GlobalResponse": {"type": "object", "required": ["global", "plots"], "properties": {
            "global": {"type": "object", "required": ["units", "instance_count", "method", "targets"], "properties": {
                "units": {"type": "array", "items": {"type": "string"}}, "instance_count": {"type": "integer"},
                "method": {"type": "string"}, "grouping": {"type": "string"},
                "targets": {"type": "array", "items": {"type": "object"}}}},
            "plots": {"$ref": "#/components/schemas/PlotBundle"}}},
        "WhatIfRequest": {"allOf": [{"$ref": "#/components/schemas/MethodOptions"}, {"type": "object", "required": ["instance"], "properties": {
            "instance": {"$ref": "#/components/schemas/Instance"},
            "overrides": {"type": "object", "additionalProperties": {"nullable": true}},
            "target": {"type": "string"},
            "grouping": {"type": "string", "enum": ["columns", "by_source"]}}}]},
        "Scenario": {"allOf": [{"$ref": "#/components/schemas/Prediction"}, {"type": "object", "required": ["explanation"], "properties": {
            "explanation": {"$ref": "#/components/schemas/ShapExplanation"}}}]},
        "WhatIfResponse": {"type": "object", "required": ["target", "before", "after", "delta"], "properties": {
            "target": {"type": "string"},
            "before": {"$ref": "#/components/schemas/Scenario"},
            "after": {"$ref": "#/components/schemas/Scenario"},
            "delta": {"type": "object", "additionalProperties": {"type": "number"}}}}
    })
}

pub async fn spec() -> Json<Value> {
    Json(document())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn refs(v: &Value, out: &mut Vec<String>) {
        match v {
            Value::Object(m) => {
                for (k, x) in m {
                    if k == "$ref" {
                        out.push(x.as_str().unwrap().to_string());
                    }
                    refs(x, out);
                }
            }
            Value::Array(a) => a.iter().for_each(|x| refs(x, out)),
            _ => {}
        }
    }

    #[test]
    fn every_reference_resolves() {
        let doc = document();
        let mut all = Vec::new();
        refs(&doc, &mut all);
        assert!(!all.is_empty());
        for r in all {
            let ptr = r.strip_prefix('#').unwrap();
            assert!(doc.pointer(ptr).is_some(), "dangling {r}");
        }
    }
}
