//! Scalar-tape reverse-mode automatic differentiation.
//!
//! Every intermediate of a recorded computation is a node on a flat tape.
//! Two backward sweeps are provided:
//!
//! * [`Tape::grad_values`] — plain float adjoint sweep, first-order only;
//! * [`Tape::grad_graph`] — the adjoint accumulation itself is recorded as
//!   tape nodes, so the resulting gradients are differentiable again.
//!
//! The second form is what lets a force-matching loss (which contains
//! -dE/dr) be differentiated with respect to model parameters.

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OpCode {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Sqrt,
    Sin,
    Cos,
    Exp,
    Ln,
    Tanh,
    Abs,
    /// a^n, integer exponent in aux.
    Powi,
    /// c * a, constant in aux.
    Scale,
    /// a + c, constant in aux.
    AddConst,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    op: OpCode,
    a: u32,
    b: u32,
    aux: f64,
}

const NONE: u32 = u32::MAX;

/// Flat operation tape. Values are computed eagerly on node creation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    vals: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drop all nodes but keep allocations for reuse.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.vals.clear();
    }

    pub fn val(&self, v: Var) -> f64 {
        self.vals[v.0 as usize]
    }

    fn push(&mut self, op: OpCode, a: u32, b: u32, aux: f64, val: f64) -> Var {
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node { op, a, b, aux });
        self.vals.push(val);
        Var(idx)
    }

    /// Independent input (or constant); gradient source/sink.
    pub fn leaf(&mut self, v: f64) -> Var {
        self.push(OpCode::Leaf, NONE, NONE, 0.0, v)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.val(a) + self.val(b);
        self.push(OpCode::Add, a.0, b.0, 0.0, v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.val(a) - self.val(b);
        self.push(OpCode::Sub, a.0, b.0, 0.0, v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.val(a) * self.val(b);
        self.push(OpCode::Mul, a.0, b.0, 0.0, v)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let v = self.val(a) / self.val(b);
        self.push(OpCode::Div, a.0, b.0, 0.0, v)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = -self.val(a);
        self.push(OpCode::Neg, a.0, NONE, 0.0, v)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.val(a).sqrt();
        self.push(OpCode::Sqrt, a.0, NONE, 0.0, v)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let v = self.val(a).sin();
        self.push(OpCode::Sin, a.0, NONE, 0.0, v)
    }

    pub fn cos(&mut self, a: Var) -> Var {
        let v = self.val(a).cos();
        self.push(OpCode::Cos, a.0, NONE, 0.0, v)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.val(a).exp();
        self.push(OpCode::Exp, a.0, NONE, 0.0, v)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.val(a).ln();
        self.push(OpCode::Ln, a.0, NONE, 0.0, v)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.val(a).tanh();
        self.push(OpCode::Tanh, a.0, NONE, 0.0, v)
    }

    /// |a|. The derivative is sign(a), treated as locally constant.
    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.val(a).abs();
        self.push(OpCode::Abs, a.0, NONE, 0.0, v)
    }

    pub fn powi(&mut self, a: Var, n: i32) -> Var {
        let v = self.val(a).powi(n);
        self.push(OpCode::Powi, a.0, NONE, n as f64, v)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.val(a) * c;
        self.push(OpCode::Scale, a.0, NONE, c, v)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.val(a) + c;
        self.push(OpCode::AddConst, a.0, NONE, c, v)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    pub fn sum(&mut self, xs: &[Var]) -> Var {
        match xs.len() {
            0 => self.leaf(0.0),
            1 => xs[0],
            _ => {
                let mut acc = self.add(xs[0], xs[1]);
                for &x in &xs[2..] {
                    acc = self.add(acc, x);
                }
                acc
            }
        }
    }

    /// First-order gradient of `y` with respect to every node, as floats.
    pub fn grad_values(&self, y: Var) -> Vec<f64> {
        let n = (y.0 as usize) + 1;
        let mut adj = vec![0.0f64; n];
        adj[y.0 as usize] = 1.0;
        for i in (0..n).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            let node = self.nodes[i];
            let (a, b) = (node.a as usize, node.b as usize);
            match node.op {
                OpCode::Leaf => {}
                OpCode::Add => {
                    adj[a] += g;
                    adj[b] += g;
                }
                OpCode::Sub => {
                    adj[a] += g;
                    adj[b] -= g;
                }
                OpCode::Mul => {
                    adj[a] += g * self.vals[b];
                    adj[b] += g * self.vals[a];
                }
                OpCode::Div => {
                    adj[a] += g / self.vals[b];
                    adj[b] -= g * self.vals[i] / self.vals[b];
                }
                OpCode::Neg => adj[a] -= g,
                OpCode::Sqrt => adj[a] += 0.5 * g / self.vals[i],
                OpCode::Sin => adj[a] += g * self.vals[a].cos(),
                OpCode::Cos => adj[a] -= g * self.vals[a].sin(),
                OpCode::Exp => adj[a] += g * self.vals[i],
                OpCode::Ln => adj[a] += g / self.vals[a],
                OpCode::Tanh => adj[a] += g * (1.0 - self.vals[i] * self.vals[i]),
                OpCode::Abs => adj[a] += g * sign(self.vals[a]),
                OpCode::Powi => {
                    let n = node.aux as i32;
                    adj[a] += g * node.aux * self.vals[a].powi(n - 1);
                }
                OpCode::Scale => adj[a] += g * node.aux,
                OpCode::AddConst => adj[a] += g,
            }
        }
        adj
    }

    /// Gradient of `y` with the adjoint accumulation recorded on the tape,
    /// so the returned gradients can be differentiated again. Returns the
    /// adjoint Var for every node index <= y (None where the adjoint is
    /// identically zero).
    pub fn grad_graph(&mut self, y: Var) -> Vec<Option<Var>> {
        let n = (y.0 as usize) + 1;
        let mut adj = vec![NONE; n];
        adj[y.0 as usize] = self.leaf(1.0).0;
        for i in (0..n).rev() {
            if adj[i] == NONE {
                continue;
            }
            let g = Var(adj[i]);
            let node = self.nodes[i];
            let (a, b) = (node.a, node.b);
            let yi = Var(i as u32);
            match node.op {
                OpCode::Leaf => {}
                OpCode::Add => {
                    acc(self, &mut adj, a, g);
                    acc(self, &mut adj, b, g);
                }
                OpCode::Sub => {
                    acc(self, &mut adj, a, g);
                    let ng = self.neg(g);
                    acc(self, &mut adj, b, ng);
                }
                OpCode::Mul => {
                    let ga = self.mul(g, Var(b));
                    acc(self, &mut adj, a, ga);
                    let gb = self.mul(g, Var(a));
                    acc(self, &mut adj, b, gb);
                }
                OpCode::Div => {
                    let ga = self.div(g, Var(b));
                    acc(self, &mut adj, a, ga);
                    // d/db (a/b) = -y/b
                    let t = self.div(yi, Var(b));
                    let gt = self.mul(g, t);
                    let gb = self.neg(gt);
                    acc(self, &mut adj, b, gb);
                }
                OpCode::Neg => {
                    let ga = self.neg(g);
                    acc(self, &mut adj, a, ga);
                }
                OpCode::Sqrt => {
                    let t = self.div(g, yi);
                    let ga = self.scale(t, 0.5);
                    acc(self, &mut adj, a, ga);
                }
                OpCode::Sin => {
                    let c = self.cos(Var(a));
                    let ga = self.mul(g, c);
                    acc(self, &mut adj, a, ga);
                }
                OpCode::Cos => {
                    let s = self.sin(Var(a));
                    let t = self.mul(g, s);
                    let ga = self.neg(t);
                    acc(self, &mut adj, a, ga);
                }
                OpCode::Exp => {
                    let ga = self.mul(g, yi);
                    acc(self, &mut adj, a, ga);
                }
                OpCode::Ln => {
                    let ga = self.div(g, Var(a));
                    acc(self, &mut adj, a, ga);
                }
                OpCode::Tanh => {
                    let y2 = self.mul(yi, yi);
                    let ny2 = self.neg(y2);
                    let d = self.add_const(ny2, 1.0);
                    let ga = self.mul(g, d);
                    acc(self, &mut adj, a, ga);
                }
                OpCode::Abs => {
                    let ga = self.scale(g, sign(self.vals[a as usize]));
                    acc(self, &mut adj, a, ga);
                }
                OpCode::Powi => {
                    let n = node.aux as i32;
                    let t = self.powi(Var(a), n - 1);
                    let gt = self.mul(g, t);
                    let ga = self.scale(gt, node.aux);
                    acc(self, &mut adj, a, ga);
                }
                OpCode::Scale => {
                    let ga = self.scale(g, node.aux);
                    acc(self, &mut adj, a, ga);
                }
                OpCode::AddConst => acc(self, &mut adj, a, g),
            }
        }
        adj.into_iter()
            .map(|x| if x == NONE { None } else { Some(Var(x)) })
            .collect()
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn acc(tape: &mut Tape, adj: &mut [u32], target: u32, contribution: Var) {
    let slot = target as usize;
    if adj[slot] == NONE {
        adj[slot] = contribution.0;
    } else {
        adj[slot] = tape.add(Var(adj[slot]), contribution).0;
    }
}
