use proptest::prelude::*;
use rand::SeedableRng;
use sandhub::manifest::{validate_document, validate_manifest, ManifestError, ParamKind};
use sandhub::share::{self, Passphrase, ShareError};
use serde_json::{json, Value};

fn param_strategy() -> impl Strategy<Value = (ParamKind, Option<Value>, String)> {
    let kind = prop::sample::select(ParamKind::ALL.to_vec());
    (
        kind,
        any::<bool>(),
        any::<i64>(),
        -1e9f64..1e9,
        "[ -~]{0,12}",
        "[ -~]{0,30}",
    )
        .prop_map(|(kind, with_default, i, x, s, desc)| {
            let default = with_default.then(|| match kind {
                ParamKind::Path | ParamKind::String => json!(s),
                ParamKind::Integer => json!(i),
                ParamKind::Float => json!(x),
                ParamKind::Boolean => json!(i % 2 == 0),
            });
            (kind, default, desc)
        })
}

prop_compose! {
    fn manifest_doc()(
        name in "[A-Za-z][A-Za-z0-9 _.-]{0,24}",
        version in prop::collection::vec(0u64..1000, 1..4),
        runtime in prop::sample::select(vec!["python", "r", "javascript"]),
        short in "[ -~]{0,80}",
        long in "[ -~\n]{0,200}",
        tags in prop::collection::btree_set("[a-z][a-z0-9-]{0,8}", 0..5),
        inline in prop::option::of("[ -~\n]{1,120}"),
        url_host in prop::sample::select(vec![
            "cdn.jsdelivr.net", "pypi.org", "files.pythonhosted.org",
            "raw.githubusercontent.com", "repo.r-wasm.org",
        ]),
        function in "[A-Za-z_][A-Za-z0-9_]{0,12}",
        returns in prop::sample::select(vec!["html", "file"]),
        params in prop::collection::vec(param_strategy(), 0..6),
    ) -> Value {
        let version: Vec<String> = version.iter().map(u64::to_string).collect();
        let source = match inline {
            Some(text) => json!({ "inline": text }),
            None => json!({ "url": format!("https://{url_host}/pkg/app.js") }),
        };
        let parameters: Vec<Value> = params
            .into_iter()
            .enumerate()
            .map(|(i, (kind, default, desc))| {
                let mut p = json!({ "name": format!("p{i}"), "kind": kind.label(), "description": desc });
                if let Some(d) = default {
                    p["default"] = d;
                }
                p
            })
            .collect();
        json!({
            "name": name, "version": version.join("."), "runtime": runtime,
            "short_description": short, "long_description": long,
            "tags": tags, "source": source,
            "entry_point": { "function": function, "returns": returns, "parameters": parameters },
        })
    }
}

/// Independent faults, each confined to one field path.
type Fault = (&'static str, fn(&mut Value));

fn faults() -> Vec<Fault> {
    vec![
        ("name", |d| d["name"] = json!("")),
        ("version", |d| d["version"] = json!("1..2")),
        ("runtime", |d| d["runtime"] = json!("cobol")),
        ("short_description", |d| {
            d["short_description"] = json!("x".repeat(281))
        }),
        ("long_description", |d| d["long_description"] = json!(5)),
        ("tags", |d| d["tags"] = json!("r")),
        ("source", |d| d["source"] = json!({})),
        ("entry_point.function", |d| {
            d["entry_point"]["function"] = json!("1run")
        }),
        ("entry_point.returns", |d| {
            d["entry_point"]["returns"] = json!("table")
        }),
        ("entry_point.parameters[0].kind", |d| {
            d["entry_point"]["parameters"][0]["kind"] = json!("dataframe")
        }),
        ("entry_point.parameters[1].name", |d| {
            d["entry_point"]["parameters"][1]["name"] = json!("has space")
        }),
        ("entry_point.parameters[2].default", |d| {
            d["entry_point"]["parameters"][2]["default"] = json!("not a bool")
        }),
        ("extra", |d| d["extra"] = json!(true)),
    ]
}

fn fault_base() -> Value {
    json!({
        "name": "Base", "version": "1.0", "runtime": "python",
        "short_description": "s", "long_description": "l", "tags": ["python"],
        "source": { "inline": "def run(a, b, c):\n    return ''\n" },
        "entry_point": { "function": "run", "returns": "html", "parameters": [
            { "name": "a", "kind": "path", "description": "" },
            { "name": "b", "kind": "integer", "description": "" },
            { "name": "c", "kind": "boolean", "description": "", "default": true },
        ]},
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn manifest_round_trip(doc in manifest_doc()) {
        let m = validate_document(&doc).unwrap();
        let again = validate_manifest(&m.to_json_string()).unwrap();
        prop_assert_eq!(&again, &m);
        prop_assert_eq!(again.to_document(), m.to_document());
    }

    #[test]
    fn every_injected_fault_is_reported(mask in 1u32..(1 << 13)) {
        let all = faults();
        let mut doc = fault_base();
        let mut expected = Vec::new();
        for (i, (path, apply)) in all.iter().enumerate() {
            if mask & (1 << i) != 0 {
                apply(&mut doc);
                expected.push(*path);
            }
        }
        match validate_document(&doc) {
            Err(ManifestError::Invalid(report)) => {
                for p in &expected {
                    prop_assert!(report.mentions(p), "{} missing from {}", p, report);
                }
                for v in &report.violations {
                    prop_assert!(expected.contains(&v.path.as_str()), "unexpected {}", v.path);
                }
            }
            other => prop_assert!(false, "expected a report, got {:?}", other),
        }
    }
}

proptest! {
    // key derivation dominates; keep the case count modest here, the
    // acceptance target runs the large sweep
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn share_round_trip(
        payload in prop::collection::vec(any::<u8>(), 0..3000),
        name in "[^/\\\\\u{0}]{1,40}",
        pass in ".{1,24}",
        seed in any::<u64>(),
    ) {
        let pw = Passphrase::new(pass.clone()).unwrap();
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let blob = share::seal(&payload, &name, &pw, &mut rng).unwrap();
        let bytes = blob.to_bytes();
        prop_assert_eq!((bytes.len() - 32) % 16, 0);
        prop_assert!(bytes.len() >= 32 + 32 + 2 + name.len() + payload.len());
        let env = share::open_bytes(&bytes, &pw).unwrap();
        prop_assert_eq!(env.payload, payload);
        prop_assert_eq!(env.file_name, name);

        let other = Passphrase::new(format!("{pass}x")).unwrap();
        prop_assert_eq!(share::open_bytes(&bytes, &other).unwrap_err(), ShareError::IntegrityFailure);
    }
}
