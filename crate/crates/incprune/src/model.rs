//! POMDP problem representation, belief-state dynamics, and the
//! line-oriented problem-file grammar.
//!
//! A [`PomdpModel`] is immutable after construction and safe to share
//! across threads; all operations here are pure functions.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Row-sum tolerance for stochasticity checks.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// A finite POMDP: state, action, and observation spaces with dense
/// transition, observation, and reward tables plus a discount factor.
///
/// Tables are stored row-major in double precision:
/// `transition[a][s][s']`, `observation[a][s'][z]`, `reward[a][s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PomdpModel {
    states: Vec<String>,
    actions: Vec<String>,
    observations: Vec<String>,
    transition: Vec<f64>,
    observation: Vec<f64>,
    reward: Vec<f64>,
    discount: f64,
}

impl PomdpModel {
    /// Builds and validates a model from dense tables.
    ///
    /// Every `(a, s)` transition row and `(a, s')` observation row must
    /// sum to 1 within [`STOCHASTIC_TOL`], all probabilities must lie in
    /// `[0, 1]`, and the discount must lie in `[0, 1]`.
    pub fn new(
        states: Vec<String>,
        actions: Vec<String>,
        observations: Vec<String>,
        transition: Vec<f64>,
        observation: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        let (ns, na, nz) = (states.len(), actions.len(), observations.len());
        if ns == 0 || na == 0 || nz == 0 {
            return Err(Error::Validation(
                "states, actions, and observations must all be non-empty".into(),
            ));
        }
        if transition.len() != na * ns * ns {
            return Err(Error::Validation(format!(
                "transition table has {} entries, expected {}",
                transition.len(),
                na * ns * ns
            )));
        }
        if observation.len() != na * ns * nz {
            return Err(Error::Validation(format!(
                "observation table has {} entries, expected {}",
                observation.len(),
                na * ns * nz
            )));
        }
        if reward.len() != na * ns {
            return Err(Error::Validation(format!(
                "reward table has {} entries, expected {}",
                reward.len(),
                na * ns
            )));
        }
        if !(0.0..=1.0).contains(&discount) || !discount.is_finite() {
            return Err(Error::Validation(format!(
                "discount {discount} outside [0, 1]"
            )));
        }
        let model = PomdpModel {
            states,
            actions,
            observations,
            transition,
            observation,
            reward,
            discount,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let (ns, nz) = (self.num_states(), self.num_observations());
        for (a, action) in self.actions.iter().enumerate() {
            for (s, state) in self.states.iter().enumerate() {
                let mut sum = 0.0;
                for s2 in 0..ns {
                    let p = self.transition(a, s, s2);
                    if !(0.0..=1.0).contains(&p) {
                        return Err(Error::Validation(format!(
                            "T({action}, {state}, {}) = {p} outside [0, 1]",
                            self.states[s2]
                        )));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::Validation(format!(
                        "transition row for action {action}, state {state} sums to {sum}, expected 1"
                    )));
                }
            }
            for (s2, state) in self.states.iter().enumerate() {
                let mut sum = 0.0;
                for z in 0..nz {
                    let p = self.observation(a, s2, z);
                    if !(0.0..=1.0).contains(&p) {
                        return Err(Error::Validation(format!(
                            "O({action}, {state}, {}) = {p} outside [0, 1]",
                            self.observations[z]
                        )));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::Validation(format!(
                        "observation row for action {action}, end state {state} sums to {sum}, expected 1"
                    )));
                }
            }
        }
        for r in &self.reward {
            if !r.is_finite() {
                return Err(Error::Validation("non-finite reward entry".into()));
            }
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn num_observations(&self) -> usize {
        self.observations.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn action_names(&self) -> &[String] {
        &self.actions
    }

    pub fn observation_names(&self) -> &[String] {
        &self.observations
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// `Pr(s' | s, a)`
    #[inline]
    pub fn transition(&self, a: usize, s: usize, s2: usize) -> f64 {
        let ns = self.num_states();
        self.transition[(a * ns + s) * ns + s2]
    }

    /// `Pr(z | s', a)`
    #[inline]
    pub fn observation(&self, a: usize, s2: usize, z: usize) -> f64 {
        let nz = self.num_observations();
        self.observation[(a * self.num_states() + s2) * nz + z]
    }

    /// `r^a(s)`
    #[inline]
    pub fn reward(&self, a: usize, s: usize) -> f64 {
        self.reward[a * self.num_states() + s]
    }

    /// Renders the model back into the problem-file grammar.
    ///
    /// Floats use the shortest representation that round-trips exactly,
    /// so parse -> serialize -> parse reproduces identical tables.
    pub fn to_file_string(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(out, "discount: {}", self.discount).unwrap();
        writeln!(out, "values: reward").unwrap();
        writeln!(out, "states: {}", self.states.join(" ")).unwrap();
        writeln!(out, "actions: {}", self.actions.join(" ")).unwrap();
        writeln!(out, "observations: {}", self.observations.join(" ")).unwrap();
        for (a, action) in self.actions.iter().enumerate() {
            writeln!(out).unwrap();
            writeln!(out, "T: {action}").unwrap();
            for s in 0..self.num_states() {
                let row: Vec<String> = (0..self.num_states())
                    .map(|s2| self.transition(a, s, s2).to_string())
                    .collect();
                writeln!(out, "{}", row.join(" ")).unwrap();
            }
        }
        for (a, action) in self.actions.iter().enumerate() {
            writeln!(out).unwrap();
            writeln!(out, "O: {action}").unwrap();
            for s2 in 0..self.num_states() {
                let row: Vec<String> = (0..self.num_observations())
                    .map(|z| self.observation(a, s2, z).to_string())
                    .collect();
                writeln!(out, "{}", row.join(" ")).unwrap();
            }
        }
        writeln!(out).unwrap();
        for (a, action) in self.actions.iter().enumerate() {
            for (s, state) in self.states.iter().enumerate() {
                writeln!(out, "R: {action} : {state} : * : * {}", self.reward(a, s)).unwrap();
            }
        }
        out
    }
}

/// A probability distribution over states: the agent's information state.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief(Vec<f64>);

impl Belief {
    /// Validates entries: non-negative and summing to 1 within 1e-9.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Validation("belief over zero states".into()));
        }
        let mut sum = 0.0;
        for &p in &probs {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::Validation(format!(
                    "belief entry {p} is negative or non-finite"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "belief sums to {sum}, expected 1"
            )));
        }
        Ok(Belief(probs))
    }

    /// The uniform distribution over `n` states.
    pub fn uniform(n: usize) -> Self {
        Belief(vec![1.0 / n as f64; n])
    }

    /// The point-mass belief `e_s`.
    pub fn corner(s: usize, n: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[s] = 1.0;
        Belief(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Clamps tiny negatives to zero and rescales to sum exactly to 1.
    /// Used to tidy beliefs produced by floating-point pipelines.
    pub(crate) fn normalized(mut probs: Vec<f64>) -> Result<Self> {
        let mut sum = 0.0;
        for p in probs.iter_mut() {
            if *p < 0.0 {
                *p = 0.0;
            }
            sum += *p;
        }
        if sum <= 0.0 || !sum.is_finite() {
            return Err(Error::Validation(format!(
                "belief mass {sum} cannot be normalized"
            )));
        }
        for p in probs.iter_mut() {
            *p /= sum;
        }
        Ok(Belief(probs))
    }
}

/// `Pr(z | x, a)`: the probability of observing `z` after acting with `a`
/// from information state `x`.
pub fn observation_prob(model: &PomdpModel, x: &Belief, a: usize, z: usize) -> f64 {
    let ns = model.num_states();
    debug_assert_eq!(x.dim(), ns);
    let mut total = 0.0;
    for s2 in 0..ns {
        let mut reach = 0.0;
        for s in 0..ns {
            reach += model.transition(a, s, s2) * x.probs()[s];
        }
        total += model.observation(a, s2, z) * reach;
    }
    total.clamp(0.0, 1.0)
}

/// The Bayes update `x -> x_z^a`: condition the transitioned belief on
/// having observed `z`.
///
/// Fails with [`Error::ZeroProbabilityObservation`] when `Pr(z | x, a) = 0`;
/// callers must not branch on impossible observations.
pub fn belief_update(model: &PomdpModel, x: &Belief, a: usize, z: usize) -> Result<Belief> {
    let ns = model.num_states();
    debug_assert_eq!(x.dim(), ns);
    let mut numer = vec![0.0; ns];
    let mut denom = 0.0;
    for s2 in 0..ns {
        let mut reach = 0.0;
        for s in 0..ns {
            reach += model.transition(a, s, s2) * x.probs()[s];
        }
        let v = model.observation(a, s2, z) * reach;
        numer[s2] = v;
        denom += v;
    }
    if denom <= 0.0 {
        return Err(Error::ZeroProbabilityObservation {
            action: a,
            observation: z,
        });
    }
    // Renormalize rather than divide by the computed denominator alone, so
    // repeated updates cannot drift off the simplex.
    Belief::normalized(numer)
}

/// Draws a dense random model: each stochastic row is a normalized vector
/// of uniform draws, rewards are uniform on `[0, 1)`.
pub fn random_pomdp(
    num_states: usize,
    num_actions: usize,
    num_observations: usize,
    discount: f64,
    seed: u64,
) -> PomdpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let row = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-3..1.0)).collect();
        let sum: f64 = v.iter().sum();
        for p in v.iter_mut() {
            *p /= sum;
        }
        v
    };
    let mut transition = Vec::with_capacity(num_actions * num_states * num_states);
    for _ in 0..num_actions * num_states {
        transition.extend(row(num_states, &mut rng));
    }
    let mut observation = Vec::with_capacity(num_actions * num_states * num_observations);
    for _ in 0..num_actions * num_states {
        observation.extend(row(num_observations, &mut rng));
    }
    let reward: Vec<f64> = (0..num_actions * num_states)
        .map(|_| rng.gen_range(0.0..1.0))
        .collect();
    PomdpModel::new(
        (0..num_states).map(|i| format!("s{i}")).collect(),
        (0..num_actions).map(|i| format!("a{i}")).collect(),
        (0..num_observations).map(|i| format!("z{i}")).collect(),
        transition,
        observation,
        reward,
        discount,
    )
    .expect("random rows are stochastic by construction")
}

// ---------------------------------------------------------------------------
// Problem-file parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Colon,
    Word(String),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn tokenize_line(line: &str, line_no: usize) -> Vec<Token> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut start = 0;
    let flush = |cur: &mut String, start: usize, out: &mut Vec<Token>| {
        if !cur.is_empty() {
            out.push(Token {
                tok: Tok::Word(std::mem::take(cur)),
                line: line_no,
                column: start,
            });
        }
    };
    for (i, ch) in line.chars().enumerate() {
        if ch == '#' {
            break;
        }
        if ch == ':' {
            flush(&mut cur, start, &mut out);
            out.push(Token {
                tok: Tok::Colon,
                line: line_no,
                column: i + 1,
            });
        } else if ch.is_whitespace() {
            flush(&mut cur, start, &mut out);
        } else {
            if cur.is_empty() {
                start = i + 1;
            }
            cur.push(ch);
        }
    }
    flush(&mut cur, start, &mut out);
    out
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy)]
enum IndexSpec {
    All,
    One(usize),
}

impl IndexSpec {
    fn expand(self, n: usize) -> std::ops::Range<usize> {
        match self {
            IndexSpec::All => 0..n,
            IndexSpec::One(i) => i..i + 1,
        }
    }
}

struct Parser {
    discount: Option<f64>,
    states: Option<Vec<String>>,
    actions: Option<Vec<String>>,
    observations: Option<Vec<String>>,
    transition: Vec<f64>,
    observation: Vec<f64>,
    // Raw reward entries indexed [a][s][s'][z]; reduced to r^a(s) at the end.
    reward_raw: Vec<f64>,
}

impl Parser {
    fn new() -> Self {
        Parser {
            discount: None,
            states: None,
            actions: None,
            observations: None,
            transition: Vec::new(),
            observation: Vec::new(),
            reward_raw: Vec::new(),
        }
    }

    fn sizes(&self, line: usize, what: &str) -> Result<(usize, usize, usize)> {
        let ns = self
            .states
            .as_ref()
            .ok_or_else(|| parse_err(line, 1, format!("states must be declared before {what}")))?
            .len();
        let na = self
            .actions
            .as_ref()
            .ok_or_else(|| parse_err(line, 1, format!("actions must be declared before {what}")))?
            .len();
        let nz = self
            .observations
            .as_ref()
            .ok_or_else(|| {
                parse_err(
                    line,
                    1,
                    format!("observations must be declared before {what}"),
                )
            })?
            .len();
        Ok((ns, na, nz))
    }

    fn ensure_tables(&mut self, line: usize, what: &str) -> Result<(usize, usize, usize)> {
        let (ns, na, nz) = self.sizes(line, what)?;
        if self.transition.is_empty() {
            self.transition = vec![0.0; na * ns * ns];
            self.observation = vec![0.0; na * ns * nz];
            self.reward_raw = vec![0.0; na * ns * ns * nz];
        }
        Ok((ns, na, nz))
    }

    fn resolve(&self, names: &[String], tok: &Token, kind: &str) -> Result<IndexSpec> {
        let word = match &tok.tok {
            Tok::Word(w) => w,
            Tok::Colon => return Err(parse_err(tok.line, tok.column, format!("expected {kind}"))),
        };
        if word == "*" {
            return Ok(IndexSpec::All);
        }
        if let Some(i) = names.iter().position(|n| n == word) {
            return Ok(IndexSpec::One(i));
        }
        if let Ok(i) = word.parse::<usize>() {
            if i < names.len() {
                return Ok(IndexSpec::One(i));
            }
        }
        Err(parse_err(
            tok.line,
            tok.column,
            format!("unknown {kind} `{word}`"),
        ))
    }
}

fn expect_colon(tokens: &[Token], pos: usize, line: usize) -> Result<()> {
    match tokens.get(pos) {
        Some(Token {
            tok: Tok::Colon, ..
        }) => Ok(()),
        Some(t) => Err(parse_err(t.line, t.column, "expected `:`")),
        None => Err(parse_err(line, 1, "unexpected end of line, expected `:`")),
    }
}

fn parse_float(tok: &Token) -> Result<f64> {
    match &tok.tok {
        Tok::Word(w) => w
            .parse::<f64>()
            .map_err(|_| parse_err(tok.line, tok.column, format!("expected a number, got `{w}`"))),
        Tok::Colon => Err(parse_err(tok.line, tok.column, "expected a number")),
    }
}

/// Reads the next `rows` non-empty lines as a `rows x cols` matrix.
fn parse_matrix(
    lines: &mut std::iter::Peekable<impl Iterator<Item = (usize, Vec<Token>)>>,
    rows: usize,
    cols: usize,
    after_line: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(rows);
    for _ in 0..rows {
        let (line_no, tokens) = loop {
            match lines.next() {
                Some((n, t)) if t.is_empty() => {
                    let _ = n;
                    continue;
                }
                Some((n, t)) => break (n, t),
                None => {
                    return Err(parse_err(
                        after_line,
                        1,
                        format!("expected {rows} matrix rows, input ended early"),
                    ))
                }
            }
        };
        if tokens.len() != cols {
            return Err(parse_err(
                line_no,
                tokens.first().map(|t| t.column).unwrap_or(1),
                format!("matrix row has {} entries, expected {cols}", tokens.len()),
            ));
        }
        let mut row = Vec::with_capacity(cols);
        for t in &tokens {
            row.push(parse_float(t)?);
        }
        out.push(row);
    }
    Ok(out)
}

/// Parses a POMDP problem file.
///
/// Grammar (line-oriented, `#` starts a comment, whitespace-insensitive):
///
/// ```text
/// discount: <float>
/// values: reward
/// states: <n | name...>          # likewise actions:, observations:
/// T: <a> : <s> : <s'> <prob>     # or `T: <a>` + |S|x|S| matrix,
///                                # or `T: <a> identity` / `T: <a> uniform`
/// O: <a> : <s'> : <z> <prob>     # or `O: <a>` + |S|x|Z| matrix, or `O: <a> uniform`
/// R: <a> : <s> : <s'> : <z> <float>
/// ```
///
/// `*` expands over the full index range. Unspecified T/O/R entries default
/// to 0. Rewards conditioned on `(s', z)` are reduced to `r^a(s)` by
/// expectation under the transition and observation tables.
pub fn parse_pomdp(text: &str) -> Result<PomdpModel> {
    let mut p = Parser::new();
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, tokenize_line(l, i + 1)))
        .peekable();

    while let Some((line_no, tokens)) = lines.next() {
        if tokens.is_empty() {
            continue;
        }
        let head = match &tokens[0].tok {
            Tok::Word(w) => w.clone(),
            Tok::Colon => return Err(parse_err(line_no, tokens[0].column, "unexpected `:`")),
        };
        match head.as_str() {
            "discount" => {
                expect_colon(&tokens, 1, line_no)?;
                let t = tokens
                    .get(2)
                    .ok_or_else(|| parse_err(line_no, 1, "discount value missing"))?;
                if p.discount.replace(parse_float(t)?).is_some() {
                    return Err(parse_err(line_no, tokens[0].column, "duplicate discount"));
                }
            }
            "values" => {
                expect_colon(&tokens, 1, line_no)?;
                match tokens.get(2).map(|t| &t.tok) {
                    Some(Tok::Word(w)) if w == "reward" => {}
                    Some(Tok::Word(w)) => {
                        return Err(parse_err(
                            tokens[2].line,
                            tokens[2].column,
                            format!("unsupported value semantics `{w}` (only `reward`)"),
                        ))
                    }
                    _ => return Err(parse_err(line_no, 1, "expected `values: reward`")),
                }
            }
            "states" | "actions" | "observations" => {
                expect_colon(&tokens, 1, line_no)?;
                let rest = &tokens[2..];
                if rest.is_empty() {
                    return Err(parse_err(line_no, 1, format!("{head} list missing")));
                }
                let names: Vec<String> = if rest.len() == 1 {
                    match &rest[0].tok {
                        Tok::Word(w) => match w.parse::<usize>() {
                            Ok(n) if n > 0 => (0..n).map(|i| i.to_string()).collect(),
                            Ok(_) => {
                                return Err(parse_err(
                                    rest[0].line,
                                    rest[0].column,
                                    format!("{head} count must be positive"),
                                ))
                            }
                            Err(_) => vec![w.clone()],
                        },
                        Tok::Colon => {
                            return Err(parse_err(rest[0].line, rest[0].column, "expected a name"))
                        }
                    }
                } else {
                    let mut names = Vec::with_capacity(rest.len());
                    for t in rest {
                        match &t.tok {
                            Tok::Word(w) => names.push(w.clone()),
                            Tok::Colon => {
                                return Err(parse_err(t.line, t.column, "expected a name"))
                            }
                        }
                    }
                    names
                };
                let slot = match head.as_str() {
                    "states" => &mut p.states,
                    "actions" => &mut p.actions,
                    _ => &mut p.observations,
                };
                if slot.replace(names).is_some() {
                    return Err(parse_err(
                        line_no,
                        tokens[0].column,
                        format!("duplicate {head} declaration"),
                    ));
                }
            }
            "T" => parse_t_line(&mut p, &tokens, line_no, &mut lines)?,
            "O" => parse_o_line(&mut p, &tokens, line_no, &mut lines)?,
            "R" => parse_r_line(&mut p, &tokens, line_no)?,
            other => {
                return Err(parse_err(
                    line_no,
                    tokens[0].column,
                    format!("unknown directive `{other}`"),
                ))
            }
        }
    }

    let discount = p
        .discount
        .ok_or_else(|| Error::Validation("discount never declared".into()))?;
    let states = p
        .states
        .clone()
        .ok_or_else(|| Error::Validation("states never declared".into()))?;
    let actions = p
        .actions
        .clone()
        .ok_or_else(|| Error::Validation("actions never declared".into()))?;
    let observations = p
        .observations
        .clone()
        .ok_or_else(|| Error::Validation("observations never declared".into()))?;
    let (ns, na, nz) = (states.len(), actions.len(), observations.len());
    if p.transition.is_empty() {
        p.transition = vec![0.0; na * ns * ns];
        p.observation = vec![0.0; na * ns * nz];
        p.reward_raw = vec![0.0; na * ns * ns * nz];
    }

    // Reduce R(a, s, s', z) to r^a(s) by expectation over Pr(s'|s,a) Pr(z|s',a).
    // A row that is constant across (s', z) is its own expectation; taking
    // the shortcut keeps fully wildcarded entries exact.
    let mut reward = vec![0.0; na * ns];
    for a in 0..na {
        for s in 0..ns {
            let row = &p.reward_raw[((a * ns + s) * ns) * nz..((a * ns + s) * ns + ns) * nz];
            if row.iter().all(|&v| v == row[0]) {
                reward[a * ns + s] = row[0];
                continue;
            }
            let mut r = 0.0;
            for s2 in 0..ns {
                let pt = p.transition[(a * ns + s) * ns + s2];
                if pt == 0.0 {
                    continue;
                }
                for z in 0..nz {
                    let po = p.observation[(a * ns + s2) * nz + z];
                    r += row[s2 * nz + z] * pt * po;
                }
            }
            reward[a * ns + s] = r;
        }
    }

    PomdpModel::new(
        states,
        actions,
        observations,
        p.transition,
        p.observation,
        reward,
        discount,
    )
}

fn parse_t_line(
    p: &mut Parser,
    tokens: &[Token],
    line_no: usize,
    lines: &mut std::iter::Peekable<impl Iterator<Item = (usize, Vec<Token>)>>,
) -> Result<()> {
    let (ns, _, _) = p.ensure_tables(line_no, "T")?;
    expect_colon(tokens, 1, line_no)?;
    let actions = p.actions.clone().unwrap();
    let states = p.states.clone().unwrap();
    let a_tok = tokens
        .get(2)
        .ok_or_else(|| parse_err(line_no, 1, "action missing after `T:`"))?;
    let a_spec = p.resolve(&actions, a_tok, "action")?;

    match tokens.get(3) {
        // `T: <a> : <s> : <s'> <prob>`
        Some(Token {
            tok: Tok::Colon, ..
        }) => {
            let s_tok = tokens
                .get(4)
                .ok_or_else(|| parse_err(line_no, 1, "state missing"))?;
            let s_spec = p.resolve(&states, s_tok, "state")?;
            expect_colon(tokens, 5, line_no)?;
            let s2_tok = tokens
                .get(6)
                .ok_or_else(|| parse_err(line_no, 1, "end state missing"))?;
            let s2_spec = p.resolve(&states, s2_tok, "state")?;
            let v_tok = tokens
                .get(7)
                .ok_or_else(|| parse_err(line_no, 1, "probability missing"))?;
            let v = parse_float(v_tok)?;
            for a in a_spec.expand(actions.len()) {
                for s in s_spec.expand(ns) {
                    for s2 in s2_spec.expand(ns) {
                        p.transition[(a * ns + s) * ns + s2] = v;
                    }
                }
            }
        }
        // `T: <a> identity` / `T: <a> uniform`
        Some(Token {
            tok: Tok::Word(w),
            line,
            column,
        }) => {
            let fill: Box<dyn Fn(usize, usize) -> f64> = match w.as_str() {
                "identity" => Box::new(|s, s2| if s == s2 { 1.0 } else { 0.0 }),
                "uniform" => Box::new(move |_, _| 1.0 / ns as f64),
                other => {
                    return Err(parse_err(
                        *line,
                        *column,
                        format!("expected `identity`, `uniform`, or a matrix, got `{other}`"),
                    ))
                }
            };
            for a in a_spec.expand(actions.len()) {
                for s in 0..ns {
                    for s2 in 0..ns {
                        p.transition[(a * ns + s) * ns + s2] = fill(s, s2);
                    }
                }
            }
        }
        // `T: <a>` followed by an |S| x |S| matrix
        None => {
            let rows = parse_matrix(lines, ns, ns, line_no)?;
            for a in a_spec.expand(actions.len()) {
                for (s, row) in rows.iter().enumerate() {
                    for (s2, &v) in row.iter().enumerate() {
                        p.transition[(a * ns + s) * ns + s2] = v;
                    }
                }
            }
        }
    }
    Ok(())
}

fn parse_o_line(
    p: &mut Parser,
    tokens: &[Token],
    line_no: usize,
    lines: &mut std::iter::Peekable<impl Iterator<Item = (usize, Vec<Token>)>>,
) -> Result<()> {
    let (ns, _, nz) = p.ensure_tables(line_no, "O")?;
    expect_colon(tokens, 1, line_no)?;
    let actions = p.actions.clone().unwrap();
    let states = p.states.clone().unwrap();
    let observations = p.observations.clone().unwrap();
    let a_tok = tokens
        .get(2)
        .ok_or_else(|| parse_err(line_no, 1, "action missing after `O:`"))?;
    let a_spec = p.resolve(&actions, a_tok, "action")?;

    match tokens.get(3) {
        // `O: <a> : <s'> : <z> <prob>`
        Some(Token {
            tok: Tok::Colon, ..
        }) => {
            let s2_tok = tokens
                .get(4)
                .ok_or_else(|| parse_err(line_no, 1, "end state missing"))?;
            let s2_spec = p.resolve(&states, s2_tok, "state")?;
            expect_colon(tokens, 5, line_no)?;
            let z_tok = tokens
                .get(6)
                .ok_or_else(|| parse_err(line_no, 1, "observation missing"))?;
            let z_spec = p.resolve(&observations, z_tok, "observation")?;
            let v_tok = tokens
                .get(7)
                .ok_or_else(|| parse_err(line_no, 1, "probability missing"))?;
            let v = parse_float(v_tok)?;
            for a in a_spec.expand(actions.len()) {
                for s2 in s2_spec.expand(ns) {
                    for z in z_spec.expand(nz) {
                        p.observation[(a * ns + s2) * nz + z] = v;
                    }
                }
            }
        }
        // `O: <a> uniform`
        Some(Token {
            tok: Tok::Word(w),
            line,
            column,
        }) => {
            if w != "uniform" {
                return Err(parse_err(
                    *line,
                    *column,
                    format!("expected `uniform` or a matrix, got `{w}`"),
                ));
            }
            for a in a_spec.expand(actions.len()) {
                for s2 in 0..ns {
                    for z in 0..nz {
                        p.observation[(a * ns + s2) * nz + z] = 1.0 / nz as f64;
                    }
                }
            }
        }
        // `O: <a>` followed by an |S| x |Z| matrix
        None => {
            let rows = parse_matrix(lines, ns, nz, line_no)?;
            for a in a_spec.expand(actions.len()) {
                for (s2, row) in rows.iter().enumerate() {
                    for (z, &v) in row.iter().enumerate() {
                        p.observation[(a * ns + s2) * nz + z] = v;
                    }
                }
            }
        }
    }
    Ok(())
}

fn parse_r_line(p: &mut Parser, tokens: &[Token], line_no: usize) -> Result<()> {
    let (ns, _, nz) = p.ensure_tables(line_no, "R")?;
    expect_colon(tokens, 1, line_no)?;
    let actions = p.actions.clone().unwrap();
    let states = p.states.clone().unwrap();
    let observations = p.observations.clone().unwrap();
    let a_tok = tokens
        .get(2)
        .ok_or_else(|| parse_err(line_no, 1, "action missing after `R:`"))?;
    let a_spec = p.resolve(&actions, a_tok, "action")?;
    expect_colon(tokens, 3, line_no)?;
    let s_tok = tokens
        .get(4)
        .ok_or_else(|| parse_err(line_no, 1, "state missing"))?;
    let s_spec = p.resolve(&states, s_tok, "state")?;
    expect_colon(tokens, 5, line_no)?;
    let s2_tok = tokens
        .get(6)
        .ok_or_else(|| parse_err(line_no, 1, "end state missing"))?;
    let s2_spec = p.resolve(&states, s2_tok, "state")?;
    expect_colon(tokens, 7, line_no)?;
    let z_tok = tokens
        .get(8)
        .ok_or_else(|| parse_err(line_no, 1, "observation missing"))?;
    let z_spec = p.resolve(&observations, z_tok, "observation")?;
    let v_tok = tokens
        .get(9)
        .ok_or_else(|| parse_err(line_no, 1, "reward value missing"))?;
    let v = parse_float(v_tok)?;
    for a in a_spec.expand(actions.len()) {
        for s in s_spec.expand(ns) {
            for s2 in s2_spec.expand(ns) {
                for z in z_spec.expand(nz) {
                    p.reward_raw[((a * ns + s) * ns + s2) * nz + z] = v;
                }
            }
        }
    }
    Ok(())
}
