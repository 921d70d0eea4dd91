//! Textual lint: does the submitted source define the declared entry point?
//!
//! Source is never executed; this only looks for the runtime's function
//! definition syntax introducing the name.

use regex::Regex;

use super::{ApplicationManifest, Runtime};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Presence {
    Found,
    Missing,
}

fn definition_patterns(runtime: Runtime, name: &str) -> Vec<String> {
    let n = regex::escape(name);
    match runtime {
        // def name(   /   async def name(
        Runtime::Python => vec![format!(r"(?m)^[ \t]*(?:async[ \t]+)?def[ \t]+{n}[ \t]*\(")],
        // name <- function(   name = function(   `name` <- function(   also \(x) lambdas
        Runtime::R => vec![format!(
            r"(?m)(?:^|[^\w.`])`?{n}`?[ \t]*(?:<<?-|=)[ \t]*(?:function|\\)[ \t]*\("
        )],
        Runtime::Javascript => vec![
            format!(r"(?m)(?:^|[^\w$.])function[ \t]*\*?[ \t]*{n}[ \t]*\("),
            format!(
                r"(?m)(?:^|[^\w$.])(?:const|let|var)[ \t]+{n}[ \t]*=[ \t]*(?:async[ \t]+)?(?:function\b|\(|[A-Za-z_$][\w$]*[ \t]*=>)"
            ),
        ],
    }
}

pub fn check_entry_point_presence(manifest: &ApplicationManifest, source_text: &str) -> Presence {
    let name = &manifest.entry_point.function_name;
    let found = definition_patterns(manifest.runtime, name).iter().any(|p| {
        Regex::new(p)
            .expect("pattern compiles")
            .is_match(source_text)
    });
    if found {
        Presence::Found
    } else {
        Presence::Missing
    }
}
