use uar_core::rag::{assemble_prompt, Passage, PromptTemplate, DEFAULT_TOP_USE};

const Q: &str = "Who wrote the novel Middlemarch?";

fn golden(name: &str) -> String {
    let p = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// Passages in reverse rank order, so assembly must sort them.
fn passages(n: usize) -> Vec<Passage> {
    (1..=n)
        .rev()
        .map(|i| Passage::new(i, format!("Passage {i}: Middlemarch fact number {i}.")))
        .collect()
}

fn drop_template() -> PromptTemplate {
    PromptTemplate::Drop {
        passage: "Eliot published it in 1871.".into(),
    }
}

#[test]
fn generic_template_goldens() {
    let t = PromptTemplate::Generic;
    assert_eq!(assemble_prompt(Q, &passages(0), &t, DEFAULT_TOP_USE), golden("generic_0.txt"));
    assert_eq!(assemble_prompt(Q, &passages(2), &t, DEFAULT_TOP_USE), golden("generic_2.txt"));
    assert_eq!(assemble_prompt(Q, &passages(5), &t, DEFAULT_TOP_USE), golden("generic_5.txt"));
    assert_eq!(assemble_prompt(Q, &passages(10), &t, DEFAULT_TOP_USE), golden("generic_5.txt"));
}

#[test]
fn compact_template_golden() {
    assert_eq!(assemble_prompt(Q, &passages(2), &PromptTemplate::Compact, 5), golden("compact_2.txt"));
    assert_eq!(assemble_prompt(Q, &[], &PromptTemplate::Compact, 5), golden("generic_0.txt"));
}

#[test]
fn dataset_specific_goldens() {
    assert_eq!(assemble_prompt(Q, &[], &drop_template(), 5), golden("drop_0.txt"));
    assert_eq!(assemble_prompt(Q, &passages(2), &drop_template(), 5), golden("drop_2.txt"));
    assert_eq!(assemble_prompt(Q, &[], &PromptTemplate::Gsm8k, 5), golden("gsm8k_0.txt"));
    assert_eq!(assemble_prompt(Q, &passages(2), &PromptTemplate::Gsm8k, 5), golden("gsm8k_2.txt"));
}
