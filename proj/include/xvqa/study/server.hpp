#pragma once

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "xvqa/study/human_study.hpp"

// HTTP front end for annotation:
//   GET  /api/hits/next?worker=<id>  next HIT payload for the worker, 204 when done
//   POST /api/responses              one judgment {hit_id, worker_id, choice, slot | context}
//   GET  /api/report                 StudyReport JSON
//   GET  /                           annotator UI (XVQA_UI_DIR if set, else a built-in page)

namespace xvqa::study {

inline const char* builtin_annotator_page() {
    return R"HTML(<!doctype html>
<html><head><meta charset="utf-8"><title>xvqa annotator</title>
<style>
body{font-family:sans-serif;max-width:900px;margin:2em auto}
.ctx{border:1px solid #999;padding:1em;margin:1em 0}
svg rect.cell{fill:none;stroke:#ccc}
</style></head>
<body>
<h1>Explanation judgment</h1>
<div id="login">Worker id: <input id="worker"> <button onclick="start()">Start</button></div>
<div id="task" hidden>
  <svg id="scene" width="300" height="300"></svg>
  <p id="question"></p>
  <div id="contexts"></div>
  <button id="submit" disabled onclick="submitHit()">Submit</button>
  <p id="msg"></p>
</div>
<p id="done" hidden>All tasks complete.</p>
<script>
const CHOICES=[["YES","Yes"],["NO_BUT_CONTAINS","No, but contains the answer"],["NO","No"],["NOT_DETERMINED","Not determined"]];
let worker=sessionStorage.getItem("worker")||"",hit=null,sel={};
function start(){worker=document.getElementById("worker").value.trim();if(!worker)return;
  sessionStorage.setItem("worker",worker);document.getElementById("login").hidden=true;next();}
async function next(){sel={};const r=await fetch("/api/hits/next?worker="+encodeURIComponent(worker));
  if(r.status===204){document.getElementById("task").hidden=true;document.getElementById("done").hidden=false;return;}
  hit=await r.json();render();}
function render(){document.getElementById("task").hidden=false;
  document.getElementById("question").textContent=hit.question_tokens.join(" ")+"?";
  const svg=document.getElementById("scene");svg.innerHTML="";
  if(hit.scene){const w=hit.scene.width,h=hit.scene.height,s=300/Math.max(w,h);
    for(let c=0;c<w;c++)for(let r=0;r<h;r++)svg.innerHTML+=`<rect class="cell" x="${c*s}" y="${r*s}" width="${s}" height="${s}"/>`;
    for(const o of hit.scene.objects){const[c,r]=o.cell;
      svg.innerHTML+=`<circle cx="${(c+.5)*s}" cy="${(r+.5)*s}" r="${s/3}" fill="${o.color}" stroke="#333"/>`+
        `<text x="${c*s+2}" y="${(r+1)*s-2}" font-size="10">${o.category}</text>`;}}
  const box=document.getElementById("contexts");box.innerHTML="";
  for(const c of hit.contexts){const d=document.createElement("div");d.className="ctx";
    d.innerHTML=`<b>Answer:</b> ${c.answer}<br><b>Explanation:</b> ${c.explanation.join(" ")}<br>`+
      CHOICES.map(([v,l])=>`<label><input type="radio" name="s${c.slot}" value="${v}"> ${l}</label>`).join(" ");
    d.querySelectorAll("input").forEach(i=>i.onchange=()=>{sel[c.slot]=i.value;update();});box.appendChild(d);}
  update();}
function update(){document.getElementById("submit").disabled=!(0 in sel&&1 in sel);}
async function submitHit(){for(const slot of [0,1]){
    const r=await fetch("/api/responses",{method:"POST",headers:{"Content-Type":"application/json"},
      body:JSON.stringify({hit_id:hit.hit_id,worker_id:worker,slot:slot,choice:sel[slot]})});
    if(r.status===400){document.getElementById("msg").textContent=(await r.json()).error;return;}}
  next();}
if(worker){document.getElementById("login").hidden=true;next();}
</script></body></html>)HTML";
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Owns the HIT list and response store; all handlers serialize on one mutex.
class StudyService {
public:
    StudyService(std::vector<HitRecord> hits, ResponseStore store) : hits_(std::move(hits)), store_(std::move(store)) {
        std::set<std::string> ids;
        for (std::size_t i = 0; i < hits_.size(); ++i) {
            ids.insert(hits_[i].hit_id);
            index_[hits_[i].hit_id] = i;
        }
        store_.set_known_hits(std::move(ids));
        for (const auto& h : hits_) assigned_[h.hit_id] = store_.workers_for(h.hit_id);
    }

    /// Next HIT for `worker`: the first one the worker has not finished that
    /// is either already theirs or still has a free worker slot.
    std::optional<json> next_hit(const std::string& worker) {
        std::lock_guard lock(mu_);
        for (const auto& h : hits_) {
            const bool done = store_.has_answered(h.hit_id, Context::predicted, worker) &&
                              store_.has_answered(h.hit_id, Context::ground_truth, worker);
            if (done) continue;
            auto& who = assigned_[h.hit_id];
            if (who.count(worker) || who.size() < kWorkersPerHit) {
                who.insert(worker);
                return hit_payload(h);
            }
        }
        return std::nullopt;
    }

    /// Parses a POST body into a response, resolving "slot" through the
    /// HIT's display order.
    AnnotationResponse parse_submission(const json& body) const {
        AnnotationResponse r;
        r.hit_id = body.at("hit_id").get<std::string>();
        r.worker_id = body.at("worker_id").get<std::string>();
        if (r.worker_id.empty()) throw std::invalid_argument("worker_id must be non-empty");
        r.choice = parse_choice(body.at("choice").get<std::string>());
        auto it = index_.find(r.hit_id);
        if (it == index_.end()) throw unknown_hit_error("unknown hit_id '" + r.hit_id + "'");
        if (body.contains("slot")) {
            const auto slot = body.at("slot").get<int>();
            if (slot != 0 && slot != 1) throw std::invalid_argument("slot must be 0 or 1");
            r.context = hits_[it->second].display_order[std::size_t(slot)];
        } else {
            r.context = parse_context(body.at("context").get<std::string>());
        }
        r.timestamp = body.value("timestamp", utc_timestamp());
        return r;
    }

    std::size_t record(const AnnotationResponse& r) {
        std::lock_guard lock(mu_);
        const auto n = store_.record(r);
        assigned_[r.hit_id].insert(r.worker_id);
        return n;
    }

    json report() const {
        std::lock_guard lock(mu_);
        if (store_.size() == 0) return {{"responses", 0}};
        return report_to_json(study_report(store_.responses(), hits_));
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return store_.size();
    }

private:
    std::vector<HitRecord> hits_;
    std::map<std::string, std::size_t> index_;
    ResponseStore store_;
    std::map<std::string, std::set<std::string>> assigned_;
    mutable std::mutex mu_;
};

inline void install_routes(httplib::Server& server, StudyService& svc) {
    auto send_json = [](httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    };

    server.Get("/api/hits/next", [&svc, send_json](const httplib::Request& req, httplib::Response& res) {
        const auto worker = req.get_param_value("worker");
        if (worker.empty()) return send_json(res, 400, {{"error", "missing worker query parameter"}});
        auto hit = svc.next_hit(worker);
        if (!hit) {
            res.status = 204;
            return;
        }
        send_json(res, 200, *hit);
    });

    server.Post("/api/responses", [&svc, send_json](const httplib::Request& req, httplib::Response& res) {
        AnnotationResponse r;
        try {
            r = svc.parse_submission(json::parse(req.body));
        } catch (const unknown_hit_error& e) {
            return send_json(res, 404, {{"error", e.what()}});
        } catch (const std::exception& e) {
            return send_json(res, 400, {{"error", e.what()}});
        }
        try {
            const auto n = svc.record(r);
            send_json(res, 201, {{"status", "stored"}, {"size", n}});
        } catch (const duplicate_response_error& e) {
            send_json(res, 409, {{"error", e.what()}});
        } catch (const unknown_hit_error& e) {
            send_json(res, 404, {{"error", e.what()}});
        }
    });

    server.Get("/api/report", [&svc, send_json](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, svc.report());
    });

    const char* ui_dir = std::getenv("XVQA_UI_DIR");
    if (ui_dir && *ui_dir && std::filesystem::is_directory(ui_dir)) {
        server.set_mount_point("/", ui_dir);
    } else {
        server.Get("/", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(builtin_annotator_page(), "text/html; charset=utf-8");
        });
    }
}

} // namespace xvqa::study
