//! Weight snapshots.
//!
//! Layout: the magic line `PLR1\n`, a UTF-8 text header of one descriptor per
//! line terminated by `end\n`, then every tensor listed in the header as
//! little-endian `f64`, in header order.
//!
//! ```text
//! PLR1
//! input 2
//! node linear 2 8 bn 1e-5 0.1 act maxout:2 pool none dropout none
//! node conv 1 64 5 5 1 2 bn 1e-5 0.1 act maxout:2 pool max:3:2:1 dropout 0.5
//! head linear 4 2
//! tensor 0.weight 8 2
//! ...
//! end
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::layers::{
    ActivationSpec, BatchNormState, ConvParams, DropoutSpec, LinearParams, PoolKind, Pooling,
};
use crate::numerics::Tensor;

use super::{Head, LayerNode, NetworkSpec, Preact};

pub const SNAPSHOT_MAGIC: &[u8] = b"PLR1\n";

fn act_token(a: &ActivationSpec) -> String {
    match a {
        ActivationSpec::Relu => "relu".into(),
        ActivationSpec::LeakyRelu { alpha } => format!("lrelu:{alpha:?}"),
        ActivationSpec::PRelu => "prelu".into(),
        ActivationSpec::Maxout { k } => format!("maxout:{k}"),
    }
}

fn pool_token(p: &Option<Pooling>) -> String {
    match p {
        None => "none".into(),
        Some(Pooling::GlobalAvg) => "gavg".into(),
        Some(Pooling::Window {
            kind,
            window,
            stride,
            pad,
        }) => {
            let k = match kind {
                PoolKind::Max => "max",
                PoolKind::Avg => "avg",
            };
            format!("{k}:{window}:{stride}:{pad}")
        }
    }
}

/// Named tensors of a network in storage order.
fn stored_tensors(net: &NetworkSpec) -> Vec<(String, &Tensor)> {
    let mut out = Vec::new();
    for (i, node) in net.nodes.iter().enumerate() {
        out.push((format!("{i}.weight"), node.preact.weight()));
        out.push((format!("{i}.bias"), node.preact.bias()));
        if let Some(bn) = &node.bn {
            out.push((format!("{i}.gamma"), &bn.gamma));
            out.push((format!("{i}.beta"), &bn.beta));
            out.push((format!("{i}.running_mean"), &bn.running_mean));
            out.push((format!("{i}.running_var"), &bn.running_var));
        }
        if let Some(a) = &node.prelu_alpha {
            out.push((format!("{i}.alpha"), a));
        }
    }
    if let Head::Linear(p) = &net.head {
        out.push(("head.weight".into(), &p.weight));
        out.push(("head.bias".into(), &p.bias));
    }
    out
}

fn stored_tensors_mut(net: &mut NetworkSpec) -> Vec<&mut Tensor> {
    let mut out = Vec::new();
    for node in &mut net.nodes {
        let (w, b) = node.preact.parts_mut();
        out.push(w);
        out.push(b);
        if let Some(bn) = &mut node.bn {
            out.push(&mut bn.gamma);
            out.push(&mut bn.beta);
            out.push(&mut bn.running_mean);
            out.push(&mut bn.running_var);
        }
        if let Some(a) = &mut node.prelu_alpha {
            out.push(a);
        }
    }
    if let Head::Linear(p) = &mut net.head {
        out.push(&mut p.weight);
        out.push(&mut p.bias);
    }
    out
}

fn join(dims: &[usize]) -> String {
    dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn write_snapshot<W: Write>(net: &NetworkSpec, mut w: W) -> std::io::Result<()> {
    let mut header = String::new();
    header.push_str(&format!("input {}\n", join(&net.input_dims)));
    for node in &net.nodes {
        let pre = match &node.preact {
            Preact::Linear(p) => format!("linear {} {}", p.in_dim(), p.out_dim()),
            Preact::Conv(p) => {
                let (kh, kw) = p.kernel_size();
                format!(
                    "conv {} {} {kh} {kw} {} {}",
                    p.in_channels(),
                    p.out_channels(),
                    p.stride,
                    p.pad
                )
            }
        };
        let bn = match &node.bn {
            Some(b) => format!("bn {:?} {:?}", b.epsilon, b.momentum),
            None => "nobn".into(),
        };
        let dropout = node.dropout.map_or("none".to_string(), |d| format!("{:?}", d.p()));
        header.push_str(&format!(
            "node {pre} {bn} act {} pool {} dropout {dropout}\n",
            act_token(&node.act),
            pool_token(&node.pool)
        ));
    }
    match &net.head {
        Head::Linear(p) => header.push_str(&format!("head linear {} {}\n", p.in_dim(), p.out_dim())),
        Head::Flatten => header.push_str("head flatten\n"),
    }
    for (name, t) in stored_tensors(net) {
        header.push_str(&format!("tensor {name} {}\n", join(t.shape())));
    }
    header.push_str("end\n");
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(header.as_bytes())?;
    for (_, t) in stored_tensors(net) {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn save_snapshot(net: &NetworkSpec, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_snapshot(net, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn load_snapshot(path: &Path) -> Result<NetworkSpec> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    read_snapshot(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            offset: self.pos as u64,
            message: msg.into(),
        }
    }

    fn line(&mut self) -> Result<&'a str> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| self.err("unterminated header line"))?;
        let line = std::str::from_utf8(&rest[..end]).map_err(|_| self.err("header is not UTF-8"))?;
        self.pos += end + 1;
        Ok(line)
    }
}

fn num<T: std::str::FromStr>(tok: Option<&str>, c: &Cursor, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| c.err(format!("bad or missing {what}")))
}

fn parse_act(tok: &str, c: &Cursor) -> Result<ActivationSpec> {
    let mut parts = tok.split(':');
    Ok(match parts.next() {
        Some("relu") => ActivationSpec::Relu,
        Some("prelu") => ActivationSpec::PRelu,
        Some("lrelu") => ActivationSpec::LeakyRelu {
            alpha: num(parts.next(), c, "leaky slope")?,
        },
        Some("maxout") => ActivationSpec::Maxout {
            k: num(parts.next(), c, "maxout rank")?,
        },
        _ => return Err(c.err(format!("unknown activation {tok:?}"))),
    })
}

fn parse_pool(tok: &str, c: &Cursor) -> Result<Option<Pooling>> {
    let mut parts = tok.split(':');
    let kind = match parts.next() {
        Some("none") => return Ok(None),
        Some("gavg") => return Ok(Some(Pooling::GlobalAvg)),
        Some("max") => PoolKind::Max,
        Some("avg") => PoolKind::Avg,
        _ => return Err(c.err(format!("unknown pooling {tok:?}"))),
    };
    Ok(Some(Pooling::Window {
        kind,
        window: num(parts.next(), c, "pool window")?,
        stride: num(parts.next(), c, "pool stride")?,
        pad: num(parts.next(), c, "pool pad")?,
    }))
}

fn expect<'a>(toks: &mut impl Iterator<Item = &'a str>, word: &str, c: &Cursor) -> Result<()> {
    match toks.next() {
        Some(t) if t == word => Ok(()),
        other => Err(c.err(format!("expected {word:?}, found {other:?}"))),
    }
}

fn parse_node(line: &str, c: &Cursor) -> Result<LayerNode> {
    let mut t = line.split_whitespace().skip(1);
    let preact = match t.next() {
        Some("linear") => {
            let (i, o): (usize, usize) = (num(t.next(), c, "in")?, num(t.next(), c, "out")?);
            Preact::Linear(LinearParams::zeros(i, o))
        }
        Some("conv") => {
            let mut v = [0usize; 6];
            for slot in &mut v {
                *slot = num(t.next(), c, "conv geometry")?;
            }
            Preact::Conv(ConvParams::zeros(v[0], v[1], v[2], v[3], v[4], v[5]))
        }
        other => return Err(c.err(format!("unknown preactivation {other:?}"))),
    };
    let bn = match t.next() {
        Some("bn") => Some((num::<f64>(t.next(), c, "epsilon")?, num::<f64>(t.next(), c, "momentum")?)),
        Some("nobn") => None,
        other => return Err(c.err(format!("expected bn/nobn, found {other:?}"))),
    };
    expect(&mut t, "act", c)?;
    let act = parse_act(t.next().unwrap_or(""), c)?;
    expect(&mut t, "pool", c)?;
    let pool = parse_pool(t.next().unwrap_or(""), c)?;
    expect(&mut t, "dropout", c)?;
    let dropout = match t.next() {
        Some("none") => None,
        tok => Some(DropoutSpec::new(num(tok, c, "dropout rate")?).map_err(|e| c.err(e.to_string()))?),
    };
    let mut node = LayerNode::new(preact, bn.is_some(), act).map_err(|e| c.err(e.to_string()))?;
    if let (Some(state), Some((eps, mom))) = (&mut node.bn, bn) {
        *state = BatchNormState {
            epsilon: eps,
            momentum: mom,
            ..BatchNormState::new(state.features())
        };
    }
    node.pool = pool;
    node.dropout = dropout;
    Ok(node)
}

/// Parses a snapshot produced by [`write_snapshot`]. The round trip is bit-exact.
pub fn read_snapshot(bytes: &[u8]) -> Result<NetworkSpec> {
    if !bytes.starts_with(SNAPSHOT_MAGIC) {
        return Err(Error::Format {
            offset: 0,
            message: "missing PLR1 magic".into(),
        });
    }
    let mut c = Cursor {
        bytes,
        pos: SNAPSHOT_MAGIC.len(),
    };
    let mut input = None;
    let mut nodes = Vec::new();
    let mut head = None;
    let mut shapes: Vec<Vec<usize>> = Vec::new();
    loop {
        let start = c.pos;
        let line = c.line()?;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("end") => break,
            Some("input") => {
                input = Some(
                    toks.map(|t| t.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| c.err("bad input extents"))?,
                )
            }
            Some("node") => {
                let at = Cursor { bytes, pos: start };
                nodes.push(parse_node(line, &at)?);
            }
            Some("head") => {
                head = Some(match toks.next() {
                    Some("linear") => Head::Linear(LinearParams::zeros(
                        num(toks.next(), &c, "head in")?,
                        num(toks.next(), &c, "head out")?,
                    )),
                    Some("flatten") => Head::Flatten,
                    other => return Err(c.err(format!("unknown head {other:?}"))),
                })
            }
            Some("tensor") => {
                toks.next().ok_or_else(|| c.err("tensor without a name"))?;
                shapes.push(
                    toks.map(|t| t.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| c.err("bad tensor shape"))?,
                );
            }
            other => return Err(c.err(format!("unknown header entry {other:?}"))),
        }
    }
    let input = input.ok_or_else(|| c.err("header has no input line"))?;
    let head = head.ok_or_else(|| c.err("header has no head line"))?;
    let mut net = NetworkSpec::new(input, nodes, head).map_err(|e| c.err(e.to_string()))?;
    let slots = stored_tensors_mut(&mut net);
    if slots.len() != shapes.len() {
        return Err(c.err(format!(
            "header lists {} tensors, architecture has {}",
            shapes.len(),
            slots.len()
        )));
    }
    for (slot, shape) in slots.into_iter().zip(shapes) {
        if slot.shape() != shape.as_slice() {
            return Err(c.err(format!(
                "tensor shape {shape:?} does not match architecture {:?}",
                slot.shape()
            )));
        }
        for v in slot.data_mut() {
            let end = c.pos + 8;
            let chunk = bytes.get(c.pos..end).ok_or_else(|| c.err("truncated tensor data"))?;
            *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            c.pos = end;
        }
    }
    if c.pos != bytes.len() {
        return Err(c.err("trailing bytes after tensor data"));
    }
    Ok(net)
}
