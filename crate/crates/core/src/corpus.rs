//! The bundled example programs.

pub const SMOKING_NMP: &str = include_str!("../programs/smoking.nmp");
pub const DNN_NMP: &str = include_str!("../programs/dnn.nmp");
pub const RNN_PL: &str = include_str!("../programs/rnn.pl");
pub const RNN_NMP: &str = include_str!("../programs/rnn.nmp");
pub const CNN_PL: &str = include_str!("../programs/cnn.pl");
pub const CNN_NMP: &str = include_str!("../programs/cnn.nmp");
pub const GNN_PL: &str = include_str!("../programs/gnn.pl");
pub const GNN_NMP: &str = include_str!("../programs/gnn.nmp");
/// XOR truth table with a header matching the DNN program's io neurons.
pub const XOR_CSV: &str = include_str!("../programs/xor.csv");

#[derive(Clone, Copy, Debug)]
pub struct CorpusProgram {
    pub name: &'static str,
    pub det: Option<&'static str>,
    pub nmp: &'static str,
    /// Output predicates, as given on the command line.
    pub outputs: &'static str,
}

pub const PROGRAMS: [CorpusProgram; 5] = [
    CorpusProgram { name: "smoking", det: None, nmp: SMOKING_NMP, outputs: "cancer/1" },
    CorpusProgram { name: "dnn", det: None, nmp: DNN_NMP, outputs: "output/1" },
    CorpusProgram { name: "rnn", det: Some(RNN_PL), nmp: RNN_NMP, outputs: "hidden/1" },
    CorpusProgram { name: "cnn", det: Some(CNN_PL), nmp: CNN_NMP, outputs: "hidden/3" },
    CorpusProgram { name: "gnn", det: Some(GNN_PL), nmp: GNN_NMP, outputs: "hidden/1" },
];

pub fn by_name(name: &str) -> Option<&'static CorpusProgram> {
    PROGRAMS.iter().find(|p| p.name == name)
}
