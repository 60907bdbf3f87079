//! Seeded synthetic design databases.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::db::{DesignDb, Record, SnapshotError};
use crate::schema::ApiSchema;

pub const GCD_INSTS: usize = 624;
pub const GCD_NETS: usize = 581;
pub const GCD_PORTS: usize = 54;

const MASTERS: [(&str, i64, i64); 12] = [
    ("INV_X1", 380, 1400),
    ("BUF_X1", 570, 1400),
    ("NAND2_X1", 570, 1400),
    ("NOR2_X1", 570, 1400),
    ("AND2_X1", 760, 1400),
    ("OR2_X1", 760, 1400),
    ("XOR2_X1", 1140, 1400),
    ("AOI21_X1", 760, 1400),
    ("OAI21_X1", 760, 1400),
    ("MUX2_X1", 1330, 1400),
    ("DFF_X1", 3420, 1400),
    ("FILLCELL_X1", 190, 1400),
];

fn port_names() -> Vec<String> {
    let mut v = vec!["clk".to_string(), "reset".to_string(), "req_rdy".into(), "req_val".into()];
    v.extend((0..32).map(|i| format!("req_msg[{i}]")));
    v.extend(["resp_rdy".to_string(), "resp_val".into()]);
    v.extend((0..16).map(|i| format!("resp_msg[{i}]")));
    v
}

fn rec(id: String, fields: serde_json::Value) -> Record {
    let fields = fields.as_object().map(|m| m.clone().into_iter().collect()).unwrap_or_default();
    Record { id, fields, children: BTreeMap::new() }
}

/// A GCD-scale netlist for the odb schema: 624 instances, 581 nets and 54
/// ports, with pins wiring instances to nets. The same seed always yields
/// the same database.
pub fn gcd(schema: &ApiSchema, seed: u64) -> Result<DesignDb, SnapshotError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ports = port_names();
    debug_assert_eq!(ports.len(), GCD_PORTS);

    let mut nets: Vec<Record> = Vec::with_capacity(GCD_NETS);
    for (i, p) in ports.iter().enumerate() {
        let sig = if p == "clk" { "CLOCK" } else { "SIGNAL" };
        nets.push(rec(format!("net{i}"), json!({"name": p, "weight": 1, "sigType": sig})));
    }
    for i in ports.len()..GCD_NETS {
        nets.push(rec(format!("net{i}"), json!({"name": format!("_{i:03}_"), "weight": 1, "sigType": "SIGNAL"})));
    }

    let masters: Vec<Record> = MASTERS
        .iter()
        .enumerate()
        .map(|(i, (n, w, h))| rec(format!("m{i}"), json!({"name": n, "width": w, "height": h})))
        .collect();

    let mut insts = Vec::with_capacity(GCD_INSTS);
    let mut iterms = Vec::new();
    for i in 0..GCD_INSTS {
        let m = rng.gen_range(0..MASTERS.len());
        let status = if MASTERS[m].0 == "FILLCELL_X1" { "FIRM" } else { "PLACED" };
        let mut inst = rec(format!("i{i}"), json!({"name": format!("_{:03}_", i + 1000), "placementStatus": status}));
        inst.children.insert("getMaster".into(), vec![format!("m{m}")]);
        let pins: &[&str] = match MASTERS[m].0 {
            "INV_X1" | "BUF_X1" => &["A", "Z"],
            "DFF_X1" => &["D", "CK", "Q"],
            "MUX2_X1" => &["A", "B", "S", "Z"],
            "FILLCELL_X1" => &[],
            _ => &["A1", "A2", "ZN"],
        };
        let mut pin_ids = Vec::new();
        for p in pins {
            let id = format!("it{}", iterms.len());
            let mut t = rec(id.clone(), json!({"name": format!("_{:03}_/{p}", i + 1000)}));
            t.children.insert("getInst".into(), vec![format!("i{i}")]);
            let net = if *p == "CK" {
                Some(0)
            } else if rng.gen_bool(0.97) {
                Some(rng.gen_range(0..GCD_NETS))
            } else {
                None
            };
            if let Some(n) = net {
                t.children.insert("getNet".into(), vec![format!("net{n}")]);
                nets[n].children.entry("getITerms".into()).or_default().push(id.clone());
            }
            pin_ids.push(id.clone());
            iterms.push(t);
        }
        inst.children.insert("getITerms".into(), pin_ids);
        insts.push(inst);
    }
    insts.shuffle(&mut rng);

    let bterms: Vec<Record> = ports
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let sig = if p == "clk" { "CLOCK" } else { "SIGNAL" };
            let mut b = rec(format!("bt{i}"), json!({"name": p, "sigType": sig}));
            b.children.insert("getNet".into(), vec![format!("net{i}")]);
            b
        })
        .collect();

    let mut block = rec("b1".into(), json!({"name": "gcd"}));
    block.children.insert("getNets".into(), nets.iter().map(|r| r.id.clone()).collect());
    block.children.insert("getInsts".into(), insts.iter().map(|r| r.id.clone()).collect());
    block.children.insert("getBTerms".into(), bterms.iter().map(|r| r.id.clone()).collect());
    let mut design = rec("d1".into(), json!({}));
    design.children.insert("getBlock".into(), vec!["b1".into()]);

    let mut objects = BTreeMap::new();
    objects.insert("Design".to_string(), vec![design]);
    objects.insert("Block".to_string(), vec![block]);
    objects.insert("Net".to_string(), nets);
    objects.insert("Inst".to_string(), insts);
    objects.insert("ITerm".to_string(), iterms);
    objects.insert("BTerm".to_string(), bterms);
    objects.insert("Master".to_string(), masters);
    DesignDb::new(schema.version.clone(), objects, BTreeMap::new(), schema)
}
