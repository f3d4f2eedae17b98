//! Newline-delimited JSON driver for [`CrimeEnv`].
//!
//! Requests, one per line:
//!
//! ```text
//! {"cmd":"reset","seed":7}
//! {"cmd":"step","action":{"cells":[..],"roles":["deterrence",..]}}
//! {"cmd":"render"}
//! ```
//!
//! Each request produces exactly one response line. Failures are reported as
//! `{"error": "...", "class": "config"|"data"|"numeric"}` and the session
//! continues.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{ActionVector, CrimeEnv};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "cmd", rename_all = "lowercase")]
pub enum Request {
    Reset {
        #[serde(default)]
        seed: u64,
    },
    Step {
        action: ActionVector,
    },
    Render,
}

#[derive(Serialize)]
struct Observation<'a> {
    observation: &'a [f64],
}

#[derive(Serialize)]
struct Failure<'a> {
    error: String,
    class: &'a str,
}

/// Answers one request line.
pub fn handle(env: &mut CrimeEnv, line: &str) -> String {
    let reply = serde_json::from_str::<Request>(line)
        .map_err(|e| Error::Parse(format!("bad request: {e}")))
        .and_then(|req| match req {
            Request::Reset { seed } => {
                let obs = env.reset(seed)?;
                Ok(serde_json::to_string(&Observation { observation: &obs }))
            }
            Request::Step { action } => Ok(serde_json::to_string(&env.step(&action)?)),
            Request::Render => Ok(serde_json::to_string(&env.render()?)),
        });
    match reply {
        Ok(Ok(s)) => s,
        Ok(Err(e)) => failure(&Error::Parse(e.to_string())),
        Err(e) => failure(&e),
    }
}

fn failure(e: &Error) -> String {
    serde_json::to_string(&Failure {
        error: e.to_string(),
        class: e.class().as_str(),
    })
    .expect("plain strings serialize")
}

/// Serves requests until end of input; returns the number handled.
pub fn serve(env: &mut CrimeEnv, input: impl BufRead, mut output: impl Write) -> Result<usize> {
    let mut n = 0;
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("<stdin>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = handle(env, &line);
        writeln!(output, "{reply}")
            .and_then(|_| output.flush())
            .map_err(|e| Error::io("<stdout>", e))?;
        n += 1;
    }
    Ok(n)
}
