//! Shared builders for the integration tests.

use infoseek_core::corpus::{estimate_tokens, Document, Passage};

/// Document with `n` generated passages spread over sections of three.
pub fn synthetic_doc(doc_id: &str, n: usize) -> Document {
    let passages = (0..n)
        .map(|i| {
            let body = format!("distinct passage body number {i} of article {doc_id}");
            Passage {
                passage_id: i,
                section_name: format!("Section {}", i / 3),
                body: body.clone(),
                token_estimate: estimate_tokens(&body),
            }
        })
        .collect();
    Document {
        doc_id: doc_id.into(),
        topic: format!("Topic {doc_id}"),
        abstract_text: format!("An abstract describing article {doc_id} in some detail."),
        topic_group: "synthetic".into(),
        inbound_citations: 20,
        outbound_references: 5,
        passages,
    }
}

/// Document from explicit bodies.
pub fn doc_from_bodies(doc_id: &str, bodies: &[String]) -> Document {
    let passages = bodies
        .iter()
        .enumerate()
        .map(|(i, body)| Passage {
            passage_id: i,
            section_name: format!("S{}", i / 2),
            body: body.clone(),
            token_estimate: estimate_tokens(body),
        })
        .collect();
    Document {
        doc_id: doc_id.into(),
        topic: doc_id.into(),
        abstract_text: "An abstract long enough for fixtures.".into(),
        topic_group: "synthetic".into(),
        inbound_citations: 20,
        outbound_references: 5,
        passages,
    }
}
