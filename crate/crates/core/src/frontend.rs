//! Python source frontend.
//!
//! Parses one file into the neutral syntax facts the two graph passes
//! consume: entity declarations, import facts, call sites, and per-statement
//! definition/use events. A file that fails to parse yields an empty
//! [`ModuleSyntax`] plus a diagnostic; the build continues.
//!
//! Name extraction is deliberately conservative: only bare names and
//! single-level `alias.name` call targets are recorded, attribute and
//! subscript assignment targets register a use of the base object and no
//! definition, and comprehension-local targets are not treated as
//! definitions at the enclosing statement.

use rustpython_parser::ast::{self, Ranged};
use rustpython_parser::text_size::TextRange;
use rustpython_parser::Parse;
use serde::{Deserialize, Serialize};

use crate::graph::DefRole;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Class,
    Function,
    Method,
}

/// One class/function/method declaration.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityDecl {
    pub kind: EntityKind,
    pub name: String,
    /// Dotted path from the repository root, e.g. `pkg.util.inc`.
    pub qualified_name: String,
    pub start_line: u32,
    pub end_line: u32,
    pub doc_head: String,
    /// Index of the lexically enclosing entity, if any.
    pub parent: Option<usize>,
    /// Parameter names in declaration order (functions and methods).
    pub params: Vec<String>,
    /// Raw base-class names (`A` or `alias.A`); classes only.
    pub bases: Vec<String>,
    /// Direct children of the function body; empty for classes.
    pub body: Vec<StatementFact>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatementForm {
    Assign,
    AugAssign,
    AnnAssign,
    ForLoop,
    WithBlock,
    Return,
    Expression,
    #[default]
    CompoundOther,
    NestedDef,
    NestedClass,
}

/// Definition/use events for one top-level statement of a function body.
///
/// Compound statements span their whole block; events inside the block are
/// attributed to the compound statement, except inside nested function or
/// class definitions, which are analyzed independently.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StatementFact {
    pub start_line: u32,
    pub end_line: u32,
    pub form: StatementForm,
    pub defs: Vec<(String, DefRole)>,
    pub uses: Vec<String>,
    pub declares_global: Vec<String>,
    pub declares_nonlocal: Vec<String>,
}

/// One import binding: local alias to absolute dotted target.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportFact {
    /// Bound local name; empty for star imports.
    pub alias: String,
    /// Absolute dotted target the alias refers to (`pkg.util.inc`, `os`).
    pub target: String,
    /// Module qualified names to try for the Imports edge, most specific first.
    pub edge_candidates: Vec<String>,
    pub line: u32,
}

/// A call site recorded for later resolution: (caller entity, raw name).
#[derive(Debug, Clone, PartialEq)]
pub struct CallSite {
    /// Index into [`ModuleSyntax::entities`]; always a function or method.
    pub caller: usize,
    /// `f` for bare calls, `alias.f` for single-attribute calls.
    pub callee_raw_name: String,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseDiagnostic {
    pub file_path: String,
    pub message: String,
}

/// All syntax facts extracted from one file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModuleSyntax {
    pub file_path: String,
    pub module_qualified_name: String,
    pub line_count: u32,
    pub doc_head: String,
    pub entities: Vec<EntityDecl>,
    pub imports: Vec<ImportFact>,
    pub call_sites: Vec<CallSite>,
    /// Relative imports that reached beyond the repository root.
    pub dropped_relative_imports: u32,
    pub diagnostic: Option<ParseDiagnostic>,
}

/// Map a repo-relative path to its dotted module name.
///
/// Separators become dots and `.py` is stripped; `__init__` modules take the
/// package name.
pub fn module_qualified_name(file_path: &str) -> String {
    let stem = file_path.strip_suffix(".py").unwrap_or(file_path);
    let dotted = stem.replace(['/', '\\'], ".");
    match dotted.strip_suffix(".__init__") {
        Some(pkg) => pkg.to_string(),
        // A root-level __init__.py has no enclosing package to take.
        None => dotted,
    }
}

/// Package parts used to resolve relative imports from this file.
fn package_parts(file_path: &str, module_qname: &str) -> Vec<String> {
    let parts: Vec<String> = module_qname.split('.').map(str::to_string).collect();
    if file_path.ends_with("__init__.py") {
        parts
    } else {
        parts[..parts.len().saturating_sub(1)].to_vec()
    }
}

/// Parse one file into syntax facts. Never fails: syntax errors produce an
/// empty fact set plus a diagnostic.
pub fn parse_module(file_path: &str, source_text: &str) -> ModuleSyntax {
    let module_qname = module_qualified_name(file_path);
    let lines = LineIndex::new(source_text);
    let mut syntax = ModuleSyntax {
        file_path: file_path.to_string(),
        module_qualified_name: module_qname.clone(),
        line_count: lines.line_count(),
        ..ModuleSyntax::default()
    };

    let suite = match ast::Suite::parse(source_text, file_path) {
        Ok(suite) => suite,
        Err(err) => {
            syntax.diagnostic = Some(ParseDiagnostic {
                file_path: file_path.to_string(),
                message: format!("line {}: {}", lines.line_of(err.offset.into()), err),
            });
            return syntax;
        }
    };

    syntax.doc_head = docstring_head(&suite);
    let package = package_parts(file_path, &module_qname);
    let mut walker = Walker {
        lines: &lines,
        package,
        syntax: &mut syntax,
    };
    walker.module_body(&suite, &module_qname);
    syntax
}

/// Byte offset to 1-based line number mapping.
pub struct LineIndex {
    starts: Vec<u32>,
    len: u32,
    line_count: u32,
}

impl LineIndex {
    pub fn new(text: &str) -> Self {
        let mut starts = vec![0u32];
        for (i, b) in text.bytes().enumerate() {
            if b == b'\n' {
                starts.push(i as u32 + 1);
            }
        }
        let mut line_count = starts.len() as u32;
        if text.is_empty() || text.ends_with('\n') {
            line_count -= 1;
        }
        LineIndex {
            starts,
            len: text.len() as u32,
            line_count,
        }
    }

    fn line_count(&self) -> u32 {
        self.line_count
    }

    fn line_of(&self, offset: u32) -> u32 {
        let offset = offset.min(self.len);
        self.starts.partition_point(|&s| s <= offset) as u32
    }

    fn span(&self, range: TextRange) -> (u32, u32) {
        let start = self.line_of(range.start().into());
        let end_offset: u32 = range.end().into();
        let end = self.line_of(end_offset.saturating_sub(1).max(range.start().into()));
        (start, end)
    }
}

fn docstring_head(body: &[ast::Stmt]) -> String {
    let Some(ast::Stmt::Expr(expr)) = body.first() else {
        return String::new();
    };
    let ast::Expr::Constant(constant) = expr.value.as_ref() else {
        return String::new();
    };
    let ast::Constant::Str(text) = &constant.value else {
        return String::new();
    };
    first_paragraph(text)
}

/// Text up to the first blank line of the docstring, whitespace-normalized.
fn first_paragraph(doc: &str) -> String {
    let mut collected: Vec<&str> = Vec::new();
    for line in doc.trim().lines() {
        let line = line.trim();
        if line.is_empty() {
            break;
        }
        collected.push(line);
    }
    collected.join(" ")
}

/// Collect class/function definition statements lexically inside `stmt`,
/// descending into compound blocks (conditional definitions are common) but
/// not into definition bodies themselves.
fn definition_statements<'b>(stmt: &'b ast::Stmt, out: &mut Vec<&'b ast::Stmt>) {
    let mut blocks: Vec<&[ast::Stmt]> = Vec::new();
    match stmt {
        ast::Stmt::FunctionDef(_) | ast::Stmt::AsyncFunctionDef(_) | ast::Stmt::ClassDef(_) => {
            out.push(stmt);
            return;
        }
        ast::Stmt::If(s) => blocks.extend([&s.body[..], &s.orelse[..]]),
        ast::Stmt::While(s) => blocks.extend([&s.body[..], &s.orelse[..]]),
        ast::Stmt::For(s) => blocks.extend([&s.body[..], &s.orelse[..]]),
        ast::Stmt::AsyncFor(s) => blocks.extend([&s.body[..], &s.orelse[..]]),
        ast::Stmt::With(s) => blocks.push(&s.body),
        ast::Stmt::AsyncWith(s) => blocks.push(&s.body),
        ast::Stmt::Try(s) => {
            blocks.extend([&s.body[..], &s.orelse[..], &s.finalbody[..]]);
            for handler in &s.handlers {
                let ast::ExceptHandler::ExceptHandler(h) = handler;
                blocks.push(&h.body);
            }
        }
        ast::Stmt::TryStar(s) => {
            blocks.extend([&s.body[..], &s.orelse[..], &s.finalbody[..]]);
            for handler in &s.handlers {
                let ast::ExceptHandler::ExceptHandler(h) = handler;
                blocks.push(&h.body);
            }
        }
        ast::Stmt::Match(s) => {
            for case in &s.cases {
                blocks.push(&case.body);
            }
        }
        _ => {}
    }
    for block in blocks {
        for nested in block {
            definition_statements(nested, out);
        }
    }
}

struct Walker<'a> {
    lines: &'a LineIndex,
    package: Vec<String>,
    syntax: &'a mut ModuleSyntax,
}

impl Walker<'_> {
    fn module_body(&mut self, body: &[ast::Stmt], module_qname: &str) {
        for stmt in body {
            match stmt {
                ast::Stmt::Import(import) => self.import_plain(import),
                ast::Stmt::ImportFrom(import) => self.import_from(import),
                _ => {}
            }
            self.definitions(stmt, None, module_qname, false);
        }
    }

    /// Visit every definition lexically under `stmt` in source order.
    fn definitions(
        &mut self,
        stmt: &ast::Stmt,
        parent: Option<usize>,
        scope_qname: &str,
        methods: bool,
    ) {
        let mut found = Vec::new();
        definition_statements(stmt, &mut found);
        for def in found {
            match def {
                ast::Stmt::ClassDef(class) => self.class(class, parent, scope_qname),
                _ => self.function(def, parent, scope_qname, methods),
            }
        }
    }

    fn import_plain(&mut self, import: &ast::StmtImport) {
        let line = self.lines.span(import.range()).0;
        for alias in &import.names {
            let dotted = alias.name.to_string();
            let first = dotted.split('.').next().unwrap_or(&dotted).to_string();
            let (bound, target) = match &alias.asname {
                Some(asname) => (asname.to_string(), dotted.clone()),
                None => (first.clone(), first.clone()),
            };
            let mut candidates = vec![dotted.clone()];
            if first != dotted {
                candidates.push(first);
            }
            self.syntax.imports.push(ImportFact {
                alias: bound,
                target,
                edge_candidates: candidates,
                line,
            });
        }
    }

    fn import_from(&mut self, import: &ast::StmtImportFrom) {
        let line = self.lines.span(import.range()).0;
        let level = import.level.map(|l| l.to_u32()).unwrap_or(0) as usize;
        let base = if level == 0 {
            import
                .module
                .as_ref()
                .map(|m| m.to_string())
                .unwrap_or_default()
        } else {
            if level - 1 > self.package.len() {
                self.syntax.dropped_relative_imports += 1;
                return;
            }
            let kept = &self.package[..self.package.len() - (level - 1)];
            let mut parts: Vec<String> = kept.to_vec();
            if let Some(module) = &import.module {
                parts.extend(module.split('.').map(str::to_string));
            }
            parts.join(".")
        };
        for alias in &import.names {
            if alias.name.as_str() == "*" {
                if !base.is_empty() {
                    self.syntax.imports.push(ImportFact {
                        alias: String::new(),
                        target: base.clone(),
                        edge_candidates: vec![base.clone()],
                        line,
                    });
                }
                continue;
            }
            let bound = alias
                .asname
                .as_ref()
                .map(|a| a.to_string())
                .unwrap_or_else(|| alias.name.to_string());
            let target = if base.is_empty() {
                alias.name.to_string()
            } else {
                format!("{base}.{}", alias.name)
            };
            let mut candidates = vec![target.clone()];
            if !base.is_empty() {
                candidates.push(base.clone());
            }
            self.syntax.imports.push(ImportFact {
                alias: bound,
                target,
                edge_candidates: candidates,
                line,
            });
        }
    }

    fn class(&mut self, class: &ast::StmtClassDef, parent: Option<usize>, scope_qname: &str) {
        let (start_line, end_line) = self.lines.span(class.range());
        let qualified_name = format!("{scope_qname}.{}", class.name);
        let mut bases = Vec::new();
        for base in &class.bases {
            match base {
                ast::Expr::Name(name) => bases.push(name.id.to_string()),
                ast::Expr::Attribute(attr) => {
                    if let ast::Expr::Name(value) = attr.value.as_ref() {
                        bases.push(format!("{}.{}", value.id, attr.attr));
                    }
                }
                _ => {}
            }
        }
        let index = self.syntax.entities.len();
        self.syntax.entities.push(EntityDecl {
            kind: EntityKind::Class,
            name: class.name.to_string(),
            qualified_name: qualified_name.clone(),
            start_line,
            end_line,
            doc_head: docstring_head(&class.body),
            parent,
            params: Vec::new(),
            bases,
            body: Vec::new(),
        });
        for stmt in &class.body {
            self.definitions(stmt, Some(index), &qualified_name, true);
        }
    }

    fn function(
        &mut self,
        stmt: &ast::Stmt,
        parent: Option<usize>,
        scope_qname: &str,
        is_method: bool,
    ) {
        let (name, args, body, range) = match stmt {
            ast::Stmt::FunctionDef(f) => (&f.name, f.args.as_ref(), &f.body, f.range),
            ast::Stmt::AsyncFunctionDef(f) => (&f.name, f.args.as_ref(), &f.body, f.range),
            _ => unreachable!("function() called on a non-def statement"),
        };
        let (start_line, end_line) = self.lines.span(range);
        let qualified_name = format!("{scope_qname}.{name}");
        let index = self.syntax.entities.len();
        self.syntax.entities.push(EntityDecl {
            kind: if is_method {
                EntityKind::Method
            } else {
                EntityKind::Function
            },
            name: name.to_string(),
            qualified_name: qualified_name.clone(),
            start_line,
            end_line,
            doc_head: docstring_head(body),
            parent,
            params: param_names(args),
            bases: Vec::new(),
            body: Vec::new(),
        });

        let mut facts = Vec::with_capacity(body.len());
        for child in body {
            let fact = extract_statement_fact(child, self.lines, |callee, line| {
                self.syntax.call_sites.push(CallSite {
                    caller: index,
                    callee_raw_name: callee,
                    line,
                });
            });
            facts.push(fact);
            // Nested definitions own their own entities and bodies.
            self.definitions(child, Some(index), &qualified_name, false);
        }
        self.syntax.entities[index].body = facts;
    }
}

fn param_names(args: &ast::Arguments) -> Vec<String> {
    let mut names = Vec::new();
    for arg in args.posonlyargs.iter().chain(&args.args) {
        names.push(arg.def.arg.to_string());
    }
    if let Some(vararg) = &args.vararg {
        names.push(vararg.arg.to_string());
    }
    for arg in &args.kwonlyargs {
        names.push(arg.def.arg.to_string());
    }
    if let Some(kwarg) = &args.kwarg {
        names.push(kwarg.arg.to_string());
    }
    names
}

/// Extract definition/use events for one statement.
///
/// `on_call` receives every recordable call target (`f` or `alias.f`) found
/// outside nested definitions and lambda bodies.
pub fn extract_statement_fact(
    stmt: &ast::Stmt,
    lines: &LineIndex,
    on_call: impl FnMut(String, u32),
) -> StatementFact {
    let (start_line, end_line) = lines.span(stmt.range());
    let mut scan = Scan {
        lines,
        fact: StatementFact {
            start_line,
            end_line,
            ..StatementFact::default()
        },
        on_call,
    };
    scan.fact.form = scan.statement(stmt, true);
    scan.finish()
}

/// Convenience wrapper used by tests: defs and uses of a single statement.
pub fn extract_defs_uses(
    stmt: &ast::Stmt,
    lines: &LineIndex,
) -> (Vec<(String, DefRole)>, Vec<String>) {
    let fact = extract_statement_fact(stmt, lines, |_, _| {});
    (fact.defs, fact.uses)
}

/// Parse a snippet and return facts of its top-level statements (test aid).
pub fn parse_statements(source: &str) -> Vec<StatementFact> {
    let lines = LineIndex::new(source);
    let suite = ast::Suite::parse(source, "<snippet>").expect("snippet must parse");
    suite
        .iter()
        .map(|stmt| extract_statement_fact(stmt, &lines, |_, _| {}))
        .collect()
}

struct Scan<'a, F: FnMut(String, u32)> {
    lines: &'a LineIndex,
    fact: StatementFact,
    on_call: F,
}

impl<F: FnMut(String, u32)> Scan<'_, F> {
    fn finish(self) -> StatementFact {
        let mut fact = self.fact;
        fact.uses.dedup_preserving();
        fact.defs.dedup_preserving();
        fact
    }

    /// Record events of `stmt`; returns its form. `top` marks the direct
    /// child of the function body (nested statements keep the outer form).
    fn statement(&mut self, stmt: &ast::Stmt, top: bool) -> StatementForm {
        match stmt {
            ast::Stmt::Assign(assign) => {
                for target in &assign.targets {
                    self.store_target(target, DefRole::Definition);
                }
                self.expr(&assign.value);
                StatementForm::Assign
            }
            ast::Stmt::AugAssign(assign) => {
                if let ast::Expr::Name(name) = assign.target.as_ref() {
                    // The target counts as both a use and a definition.
                    self.fact.uses.push(name.id.to_string());
                    self.fact
                        .defs
                        .push((name.id.to_string(), DefRole::Augmented));
                } else {
                    self.store_target(&assign.target, DefRole::Definition);
                }
                self.expr(&assign.value);
                StatementForm::AugAssign
            }
            ast::Stmt::AnnAssign(assign) => {
                self.expr(&assign.annotation);
                if let Some(value) = &assign.value {
                    self.store_target(&assign.target, DefRole::Definition);
                    self.expr(value);
                }
                StatementForm::AnnAssign
            }
            ast::Stmt::For(f) => {
                self.store_target(&f.target, DefRole::LoopTarget);
                self.expr(&f.iter);
                self.block(&f.body);
                self.block(&f.orelse);
                StatementForm::ForLoop
            }
            ast::Stmt::AsyncFor(f) => {
                self.store_target(&f.target, DefRole::LoopTarget);
                self.expr(&f.iter);
                self.block(&f.body);
                self.block(&f.orelse);
                StatementForm::ForLoop
            }
            ast::Stmt::With(w) => {
                self.with_items(&w.items);
                self.block(&w.body);
                StatementForm::WithBlock
            }
            ast::Stmt::AsyncWith(w) => {
                self.with_items(&w.items);
                self.block(&w.body);
                StatementForm::WithBlock
            }
            ast::Stmt::Return(ret) => {
                if let Some(value) = &ret.value {
                    self.expr(value);
                }
                StatementForm::Return
            }
            ast::Stmt::Expr(expr) => {
                self.expr(&expr.value);
                StatementForm::Expression
            }
            ast::Stmt::If(stmt) => {
                self.expr(&stmt.test);
                self.block(&stmt.body);
                self.block(&stmt.orelse);
                StatementForm::CompoundOther
            }
            ast::Stmt::While(stmt) => {
                self.expr(&stmt.test);
                self.block(&stmt.body);
                self.block(&stmt.orelse);
                StatementForm::CompoundOther
            }
            ast::Stmt::Try(stmt) => {
                self.try_body(&stmt.body, &stmt.handlers, &stmt.orelse, &stmt.finalbody);
                StatementForm::CompoundOther
            }
            ast::Stmt::TryStar(stmt) => {
                self.try_body(&stmt.body, &stmt.handlers, &stmt.orelse, &stmt.finalbody);
                StatementForm::CompoundOther
            }
            ast::Stmt::Match(stmt) => {
                self.expr(&stmt.subject);
                for case in &stmt.cases {
                    if let Some(guard) = &case.guard {
                        self.expr(guard);
                    }
                    self.block(&case.body);
                }
                StatementForm::CompoundOther
            }
            ast::Stmt::Raise(stmt) => {
                if let Some(exc) = &stmt.exc {
                    self.expr(exc);
                }
                if let Some(cause) = &stmt.cause {
                    self.expr(cause);
                }
                StatementForm::CompoundOther
            }
            ast::Stmt::Assert(stmt) => {
                self.expr(&stmt.test);
                if let Some(msg) = &stmt.msg {
                    self.expr(msg);
                }
                StatementForm::CompoundOther
            }
            ast::Stmt::Delete(stmt) => {
                for target in &stmt.targets {
                    if !matches!(target, ast::Expr::Name(_)) {
                        self.expr_children_only(target);
                    }
                }
                StatementForm::CompoundOther
            }
            ast::Stmt::Global(stmt) => {
                self.fact
                    .declares_global
                    .extend(stmt.names.iter().map(|n| n.to_string()));
                StatementForm::CompoundOther
            }
            ast::Stmt::Nonlocal(stmt) => {
                self.fact
                    .declares_nonlocal
                    .extend(stmt.names.iter().map(|n| n.to_string()));
                StatementForm::CompoundOther
            }
            ast::Stmt::FunctionDef(_) | ast::Stmt::AsyncFunctionDef(_) => {
                if top {
                    StatementForm::NestedDef
                } else {
                    StatementForm::CompoundOther
                }
            }
            ast::Stmt::ClassDef(_) => {
                if top {
                    StatementForm::NestedClass
                } else {
                    StatementForm::CompoundOther
                }
            }
            _ => StatementForm::CompoundOther,
        }
    }

    fn block(&mut self, body: &[ast::Stmt]) {
        for stmt in body {
            // Nested defs/classes are separate scopes; their events belong
            // to their own entities.
            if matches!(
                stmt,
                ast::Stmt::FunctionDef(_) | ast::Stmt::AsyncFunctionDef(_) | ast::Stmt::ClassDef(_)
            ) {
                continue;
            }
            self.statement(stmt, false);
        }
    }

    fn try_body(
        &mut self,
        body: &[ast::Stmt],
        handlers: &[ast::ExceptHandler],
        orelse: &[ast::Stmt],
        finalbody: &[ast::Stmt],
    ) {
        self.block(body);
        for handler in handlers {
            let ast::ExceptHandler::ExceptHandler(h) = handler;
            if let Some(type_) = &h.type_ {
                self.expr(type_);
            }
            self.block(&h.body);
        }
        self.block(orelse);
        self.block(finalbody);
    }

    fn with_items(&mut self, items: &[ast::WithItem]) {
        for item in items {
            self.expr(&item.context_expr);
            if let Some(vars) = &item.optional_vars {
                self.store_target(vars, DefRole::WithTarget);
            }
        }
    }

    /// Assignment-target walker: plain names become defs; attribute and
    /// subscript targets contribute uses of their base expressions only.
    fn store_target(&mut self, target: &ast::Expr, role: DefRole) {
        match target {
            ast::Expr::Name(name) => {
                self.fact.defs.push((name.id.to_string(), role));
            }
            ast::Expr::Tuple(tuple) => {
                for element in &tuple.elts {
                    self.store_target(element, role);
                }
            }
            ast::Expr::List(list) => {
                for element in &list.elts {
                    self.store_target(element, role);
                }
            }
            ast::Expr::Starred(starred) => self.store_target(&starred.value, role),
            ast::Expr::Attribute(attr) => self.expr(&attr.value),
            ast::Expr::Subscript(sub) => {
                self.expr(&sub.value);
                self.expr(&sub.slice);
            }
            _ => self.expr_children_only(target),
        }
    }

    /// Walk an expression, collecting Load-context names, walrus definitions,
    /// and recordable call targets. Lambda bodies are separate scopes and are
    /// skipped (their defaults evaluate in this scope and are walked).
    fn expr(&mut self, expr: &ast::Expr) {
        match expr {
            ast::Expr::Name(name) => {
                if matches!(name.ctx, ast::ExprContext::Load) {
                    self.fact.uses.push(name.id.to_string());
                }
            }
            ast::Expr::NamedExpr(walrus) => {
                if let ast::Expr::Name(target) = walrus.target.as_ref() {
                    self.fact
                        .defs
                        .push((target.id.to_string(), DefRole::Definition));
                }
                self.expr(&walrus.value);
            }
            ast::Expr::Call(call) => {
                match call.func.as_ref() {
                    ast::Expr::Name(name) => {
                        (self.on_call)(name.id.to_string(), self.lines.span(call.range()).0);
                    }
                    ast::Expr::Attribute(attr) => {
                        if let ast::Expr::Name(value) = attr.value.as_ref() {
                            (self.on_call)(
                                format!("{}.{}", value.id, attr.attr),
                                self.lines.span(call.range()).0,
                            );
                        }
                    }
                    _ => {}
                }
                self.expr(&call.func);
                for arg in &call.args {
                    self.expr(arg);
                }
                for keyword in &call.keywords {
                    self.expr(&keyword.value);
                }
            }
            ast::Expr::Lambda(lambda) => {
                for default in lambda
                    .args
                    .posonlyargs
                    .iter()
                    .chain(&lambda.args.args)
                    .chain(&lambda.args.kwonlyargs)
                    .filter_map(|a| a.default.as_deref())
                {
                    self.expr(default);
                }
            }
            _ => self.expr_children_only(expr),
        }
    }

    fn expr_children_only(&mut self, expr: &ast::Expr) {
        match expr {
            ast::Expr::BoolOp(e) => e.values.iter().for_each(|v| self.expr(v)),
            ast::Expr::BinOp(e) => {
                self.expr(&e.left);
                self.expr(&e.right);
            }
            ast::Expr::UnaryOp(e) => self.expr(&e.operand),
            ast::Expr::IfExp(e) => {
                self.expr(&e.test);
                self.expr(&e.body);
                self.expr(&e.orelse);
            }
            ast::Expr::Dict(e) => {
                for key in e.keys.iter().flatten() {
                    self.expr(key);
                }
                for value in &e.values {
                    self.expr(value);
                }
            }
            ast::Expr::Set(e) => e.elts.iter().for_each(|v| self.expr(v)),
            ast::Expr::ListComp(e) => {
                self.expr(&e.elt);
                self.comprehensions(&e.generators);
            }
            ast::Expr::SetComp(e) => {
                self.expr(&e.elt);
                self.comprehensions(&e.generators);
            }
            ast::Expr::DictComp(e) => {
                self.expr(&e.key);
                self.expr(&e.value);
                self.comprehensions(&e.generators);
            }
            ast::Expr::GeneratorExp(e) => {
                self.expr(&e.elt);
                self.comprehensions(&e.generators);
            }
            ast::Expr::Await(e) => self.expr(&e.value),
            ast::Expr::Yield(e) => {
                if let Some(value) = &e.value {
                    self.expr(value);
                }
            }
            ast::Expr::YieldFrom(e) => self.expr(&e.value),
            ast::Expr::Compare(e) => {
                self.expr(&e.left);
                e.comparators.iter().for_each(|c| self.expr(c));
            }
            ast::Expr::FormattedValue(e) => self.expr(&e.value),
            ast::Expr::JoinedStr(e) => e.values.iter().for_each(|v| self.expr(v)),
            ast::Expr::Attribute(e) => self.expr(&e.value),
            ast::Expr::Subscript(e) => {
                self.expr(&e.value);
                self.expr(&e.slice);
            }
            ast::Expr::Starred(e) => self.expr(&e.value),
            ast::Expr::List(e) => e.elts.iter().for_each(|v| self.expr(v)),
            ast::Expr::Tuple(e) => e.elts.iter().for_each(|v| self.expr(v)),
            ast::Expr::Slice(e) => {
                for part in [&e.lower, &e.upper, &e.step].into_iter().flatten() {
                    self.expr(part);
                }
            }
            ast::Expr::Name(_)
            | ast::Expr::NamedExpr(_)
            | ast::Expr::Call(_)
            | ast::Expr::Lambda(_) => self.expr(expr),
            ast::Expr::Constant(_) => {}
        }
    }

    /// Comprehension targets are not modeled as definitions; free names used
    /// inside comprehensions surface as uses at the enclosing statement.
    fn comprehensions(&mut self, generators: &[ast::Comprehension]) {
        for generator in generators {
            self.expr(&generator.iter);
            for condition in &generator.ifs {
                self.expr(condition);
            }
        }
    }
}

trait DedupPreserving {
    fn dedup_preserving(&mut self);
}

impl<T: PartialEq + Clone> DedupPreserving for Vec<T> {
    fn dedup_preserving(&mut self) {
        let mut seen: Vec<T> = Vec::with_capacity(self.len());
        self.retain(|item| {
            if seen.contains(item) {
                false
            } else {
                seen.push(item.clone());
                true
            }
        });
    }
}
