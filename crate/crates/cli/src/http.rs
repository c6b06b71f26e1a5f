//! HTTP transport: a single POST endpoint, `/tool`, one request per body.

use anyhow::anyhow;
use tiny_http::{Header, Method, Response, Server};

use arise_core::service::ToolService;

pub fn serve(service: &ToolService, port: u16) -> anyhow::Result<()> {
    let server = Server::http(("127.0.0.1", port))
        .map_err(|e| anyhow!("cannot bind 127.0.0.1:{port}: {e}"))?;
    log::info!("serving tool API on http://127.0.0.1:{port}/tool");
    let json_header: Header = "Content-Type: application/json"
        .parse()
        .expect("static header parses");
    for mut request in server.incoming_requests() {
        let reply = match (request.method(), request.url()) {
            (Method::Post, "/tool") => {
                let mut body = String::new();
                match request.as_reader().read_to_string(&mut body) {
                    Ok(_) => {
                        let line = service.handle_line(&body);
                        Response::from_string(line).with_header(json_header.clone())
                    }
                    Err(err) => Response::from_string(format!(
                        "{{\"id\":null,\"ok\":false,\"error\":{{\"code\":\"io_error\",\"message\":\"{err}\"}}}}"
                    ))
                    .with_status_code(400)
                    .with_header(json_header.clone()),
                }
            }
            _ => Response::from_string(
                "{\"id\":null,\"ok\":false,\"error\":{\"code\":\"not_found\",\"message\":\"POST /tool\"}}",
            )
            .with_status_code(404)
            .with_header(json_header.clone()),
        };
        if let Err(err) = request.respond(reply) {
            log::warn!("failed to write response: {err}");
        }
    }
    Ok(())
}
