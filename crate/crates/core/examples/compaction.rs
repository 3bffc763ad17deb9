//! Collapse a change-event window into one action per resource.

use lcq::client::compact;
use lcq::rdf::Iri;
use lcq::trs::{ChangeEvent, ChangeKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let r = |id: &str| Iri::new(format!("http://reqs.example.org/resources/{id}"));
    let window = [
        (1, r("R1")?, ChangeKind::Creation),
        (2, r("R1")?, ChangeKind::Modification),
        (3, r("R2")?, ChangeKind::Modification),
        (4, r("R1")?, ChangeKind::Deletion),
        (5, r("R3")?, ChangeKind::Deletion),
        (6, r("R2")?, ChangeKind::Modification),
    ]
    .into_iter()
    .map(|(order, uri, kind)| ChangeEvent::new(order, uri, kind, 0))
    .collect::<Vec<_>>();

    for a in compact(&window)? {
        println!("{:<40} {:?} (through order {})", a.uri.as_str(), a.action, a.max_order);
    }

    let mut shuffled = window.clone();
    shuffled.swap(0, 1);
    println!("out of order: {}", compact(&shuffled).unwrap_err());
    Ok(())
}
