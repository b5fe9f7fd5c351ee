//! Synthetic corpora shared by the integration tests.

#![allow(dead_code)]

pub mod gradcheck;
pub mod oracles;
pub mod probes;
pub mod suites;

use std::path::PathBuf;

use spc_core::corpus::{Corpus, Dialogue, PersonaType, Split, TypedInstance, Utterance};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden").join(name)
}

const CHATTER: [&str; 8] = [
    "okay sure",
    "what time is it",
    "see you later",
    "hey there",
    "no way",
    "did you hear that",
    "hmm right",
    "come on then",
];

const THINGS: [&str; 6] = ["pizza", "jazz", "hiking", "movies", "cats", "chess"];

/// Twenty dialogues of six utterances; persona utterances (and only those)
/// contain "i love".
pub fn separable_discovery_corpus() -> Corpus {
    let dialogues = (0..20).map(|d| {
        let utterances = (0..6)
            .map(|i| {
                let speaker = if i % 2 == 0 { "Ann" } else { "Bob" };
                if (i + d) % 3 == 0 {
                    let thing = THINGS[(d + i) % THINGS.len()];
                    Utterance::persona(
                        i,
                        speaker,
                        &format!("i love {thing}"),
                        PersonaType::Likes,
                        thing,
                    )
                } else {
                    Utterance::plain(i, speaker, CHATTER[(d * 5 + i) % CHATTER.len()])
                }
            })
            .collect();
        Dialogue::new(&format!("syn{d:02}"), Split::Train, utterances)
    });
    Corpus::from_dialogues(dialogues)
}

fn type_sentence(t: PersonaType, k: usize) -> (String, String) {
    let pick = |xs: &[&str]| xs[k % xs.len()].to_string();
    match t {
        PersonaType::Trait => {
            let v = pick(&["brave", "lazy", "shy", "loud"]);
            (format!("i am quite {v}"), v)
        }
        PersonaType::Likes => {
            let v = pick(&["pizza", "jazz", "hiking", "chess"]);
            (format!("i really enjoy {v}"), v)
        }
        PersonaType::Relation => {
            let v = pick(&["sister", "uncle", "cousin", "father"]);
            (format!("my {v} came over"), v)
        }
        PersonaType::Occupation => {
            let v = pick(&["nurse", "chef", "pilot", "lawyer"]);
            (format!("i work as a {v}"), v)
        }
        PersonaType::Misc => {
            let v = pick(&["ohio", "paris", "texas", "rome"]);
            (format!("i was born in {v}"), v)
        }
    }
}

/// Eight three-utterance dialogues per persona type, each ending in one
/// typed target utterance.
pub fn separable_type_corpus() -> Corpus {
    let mut dialogues = Vec::new();
    for t in PersonaType::ALL {
        for k in 0..8 {
            let (text, value) = type_sentence(t, k);
            let a = CHATTER[(k + t.index()) % CHATTER.len()];
            let b = CHATTER[(k * 3 + 1) % CHATTER.len()];
            let target_speaker = if k % 2 == 0 { "Ann" } else { "Bob" };
            dialogues.push(Dialogue::new(
                &format!("{}{k}", t.as_str()),
                Split::Train,
                vec![
                    Utterance::plain(0, "Ann", a),
                    Utterance::plain(1, "Bob", b),
                    Utterance::persona(2, target_speaker, &text, t, &value),
                ],
            ));
        }
    }
    Corpus::from_dialogues(dialogues)
}

pub fn type_instances(corpus: &Corpus) -> Vec<TypedInstance> {
    corpus.split(Split::Train).iter().flat_map(Dialogue::gold_instances).collect()
}

const SPANS: [&str; 10] = [
    "teaches aerobics",
    "plays guitar",
    "hates rain",
    "owns boats",
    "fixes cars",
    "paints walls",
    "bakes bread",
    "rides horses",
    "grows tomatoes",
    "sings opera",
];

/// Ten dialogues whose target marks its value with brackets:
/// `"... [ teaches aerobics ] ..."`.
pub fn copy_corpus() -> Corpus {
    let dialogues = SPANS.iter().enumerate().map(|(k, span)| {
        let pre = CHATTER[k % CHATTER.len()];
        let text = format!("{pre} [ {span} ] ok");
        Dialogue::new(
            &format!("copy{k}"),
            Split::Train,
            vec![
                Utterance::plain(0, "Ann", CHATTER[(k + 3) % CHATTER.len()]),
                Utterance::persona(1, "Bob", &text, PersonaType::Misc, span),
            ],
        )
    });
    Corpus::from_dialogues(dialogues)
}

/// Run the CLI in-process, returning `(exit code, stdout, stderr)`.
pub fn run_cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("spc").chain(args.iter().copied());
    let code = spc_core::cli::run_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

/// Train all three models on the fixture corpus with `tiny.toml`, evaluate
/// in both modes and build profiles, all inside `dir`. Returns every file
/// written, by name.
pub fn fixture_run(dir: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    let corpus = fixture_path("spice_fixture.jsonl");
    let config = fixture_path("tiny.toml");
    let base = [
        "--config",
        config.to_str().unwrap(),
        "--corpus",
        corpus.to_str().unwrap(),
        "--output-dir",
        dir.to_str().unwrap(),
    ];
    let commands: [&[&str]; 6] = [
        &["train-discovery"],
        &["train-typeid"],
        &["train-valueex"],
        &["evaluate", "--mode", "standalone"],
        &["evaluate", "--mode", "pipeline"],
        &["profile"],
    ];
    for c in commands {
        let args: Vec<&str> = c.iter().chain(base.iter()).copied().collect();
        let (code, out, err) = run_cli(&args);
        assert_eq!(code, 0, "{args:?}\n{out}\n{err}");
    }
    let mut files = std::collections::BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        files.insert(
            entry.file_name().to_string_lossy().into_owned(),
            std::fs::read(entry.path()).unwrap(),
        );
    }
    files
}

/// Compare `stats --json` on the fixture against its expected-counts file.
/// Returns the mismatches.
pub fn fixture_stats_mismatches() -> Vec<String> {
    let corpus = fixture_path("spice_fixture.jsonl");
    let (code, out, err) = run_cli(&["stats", "--json", "--corpus", corpus.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let got: serde_json::Value = serde_json::from_str(&out).unwrap();
    let expected: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fixture_path("spice_fixture.expected.json")).unwrap()).unwrap();
    let mut bad = Vec::new();
    for (split, want) in expected.as_object().unwrap() {
        let have = &got["splits"][split];
        for (key, w) in want.as_object().unwrap() {
            let h = &have[key];
            let same = match (w.as_f64(), h.as_f64()) {
                // Means are stored rounded to two decimals.
                (Some(w), Some(h)) if key.starts_with("mean") => (w - h).abs() <= 0.005 + 1e-12,
                _ => w == h,
            };
            if !same {
                bad.push(format!("{split}.{key}: expected {w}, got {h}"));
            }
        }
    }
    bad
}
