mod common;

use faithcheck::prompts::{render_classification, render_explanation};

#[test]
fn every_transcript_prompt_is_reproduced_byte_for_byte() {
    let mut failures = Vec::new();
    for t in common::transcripts() {
        let obs = t.observation();
        let cfg = t.config();
        let classify = render_classification(&obs, &cfg, None).unwrap();
        if classify != t.classify.prompt {
            failures.push(format!("{} classify:\n  got  {classify:?}\n  want {:?}", t.name, t.classify.prompt));
        }
        let explain = render_explanation(&obs, t.kind(), &cfg).unwrap();
        if explain != t.explain.prompt {
            failures.push(format!("{} explain:\n  got  {explain:?}\n  want {:?}", t.name, t.explain.prompt));
        }
        let recheck = render_classification(&obs, &cfg, Some(t.recheck_paragraph())).unwrap();
        if recheck != t.recheck.prompt {
            failures.push(format!("{} recheck:\n  got  {recheck:?}\n  want {:?}", t.name, t.recheck.prompt));
        }
    }
    assert!(failures.is_empty(), "{} mismatches:\n{}", failures.len(), failures.join("\n"));
}
