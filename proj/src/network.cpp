#include "iaasim/network.hpp"

#include "iaasim/errors.hpp"

namespace iaasim {

NetworkNode::NetworkNode(SharingKernel& kernel, double in_bytes_per_s, double out_bytes_per_s,
                         std::string name)
    : name_(std::move(name)),
      input_(kernel, SpreaderRole::consumer, in_bytes_per_s * kernel.clock().tick_seconds(),
             name_ + ".in"),
      output_(kernel, SpreaderRole::provider, out_bytes_per_s * kernel.clock().tick_seconds(),
              name_ + ".out") {}

std::optional<Tick> NetworkNode::latency_to(const NetworkNode& to) const {
  if (&to == this)
    return Tick{0};
  auto it = latency_.find(&to);
  if (it == latency_.end())
    return std::nullopt;
  return it->second;
}

Repository::Repository(SharingKernel& kernel, double capacity_bytes, double net_in_bytes_per_s,
                       double net_out_bytes_per_s, std::string name)
    : kernel_(kernel), name_(std::move(name)), capacity_(capacity_bytes),
      node_(kernel, net_in_bytes_per_s, net_out_bytes_per_s, name_) {
  if (capacity_ < 0.0)
    throw ValidationError("repository capacity cannot be negative");
}

void Repository::register_object(const StorageObject& object) {
  if (object.id.empty())
    throw ValidationError("storage objects need an id");
  if (object.size_bytes < 0.0)
    throw ValidationError("storage object size cannot be negative");
  if (objects_.count(object.id) != 0)
    throw StateError("object id already present: " + object.id);
  if (object.size_bytes > free_bytes())
    throw StateError("no space left in repository " + name_ + " for " + object.id);
  used_ += object.size_bytes;
  objects_.emplace(object.id, object);
}

bool Repository::deregister_object(const std::string& id) {
  auto it = objects_.find(id);
  if (it == objects_.end())
    return false;
  used_ -= it->second.size_bytes;
  objects_.erase(it);
  return true;
}

const StorageObject* Repository::lookup(const std::string& id) const {
  auto it = objects_.find(id);
  return it == objects_.end() ? nullptr : &it->second;
}

std::vector<StorageObject> Repository::contents() const {
  std::vector<StorageObject> out;
  out.reserve(objects_.size());
  for (const auto& [id, obj] : objects_)
    out.push_back(obj);
  return out;
}

ConsumptionPtr Repository::transfer_to(Repository& destination, const std::string& object_id,
                                       TransferOptions options, TransferHandler handler) {
  const StorageObject* obj = lookup(object_id);
  if (obj == nullptr)
    throw ValidationError("repository " + name_ + " does not hold " + object_id);
  std::optional<Tick> latency = node_.latency_to(destination.node());
  if (!latency.has_value())
    throw StateError("no route from " + name_ + " to " + destination.name());
  return start_transfer(destination, *obj, node_.output(), destination.node().input(), *latency,
                        std::move(options), std::move(handler));
}

ConsumptionPtr Repository::store_stream(const StorageObject& object, TransferHandler handler) {
  if (object.id.empty())
    throw ValidationError("storage objects need an id");
  TransferOptions options;
  options.target_id = object.id;
  return start_transfer(*this, object, node_.output(), node_.input(), 0, std::move(options),
                        std::move(handler));
}

ConsumptionPtr Repository::read_stream(const std::string& object_id, TransferHandler handler) {
  const StorageObject* obj = lookup(object_id);
  if (obj == nullptr)
    throw ValidationError("repository " + name_ + " does not hold " + object_id);
  ConsumptionPtr c = kernel_.create_consumption(obj->size_bytes,
                                                std::numeric_limits<double>::infinity());
  ++live_outbound_;
  Repository* self = this;
  c->on_finish([self, handler = std::move(handler)](ResourceConsumption&,
                                                    ConsumptionOutcome outcome) {
    --self->live_outbound_;
    if (handler)
      handler(outcome);
  });
  kernel_.register_consumption(c, node_.output(), node_.input());
  return c;
}

ConsumptionPtr Repository::start_transfer(Repository& destination, const StorageObject& object,
                                          ResourceSpreader& out, ResourceSpreader& in,
                                          Tick latency, TransferOptions options,
                                          TransferHandler handler) {
  if (!(options.per_tick_limit > 0.0))
    throw ValidationError("per-tick limit must be positive");
  std::string target_id = options.target_id.empty() ? object.id : options.target_id;
  if (destination.objects_.count(target_id) != 0)
    throw StateError("object id already present: " + target_id);
  if (object.size_bytes > destination.free_bytes())
    throw StateError("no space left in repository " + destination.name_ + " for " + target_id);
  destination.reserved_ += object.size_bytes;
  ++live_outbound_;

  ConsumptionPtr c = kernel_.create_consumption(object.size_bytes, options.per_tick_limit);
  double size = object.size_bytes;
  Repository* src = this;
  Repository* dst = &destination;
  c->on_finish([src, dst, size, target_id, handler = std::move(handler)](
                   ResourceConsumption&, ConsumptionOutcome outcome) {
    --src->live_outbound_;
    dst->reserved_ -= size;
    if (outcome == ConsumptionOutcome::completed) {
      dst->used_ += size;
      dst->objects_.emplace(target_id, StorageObject{target_id, size});
    }
    if (handler)
      handler(outcome);
  });

  if (latency > 0) {
    // Hold on the zero-capacity pair while the first byte is in flight, then
    // move to the real endpoints; in-flight state carries over untouched.
    kernel_.register_consumption(c, kernel_.null_provider(), kernel_.null_consumer());
    SharingKernel* kernel = &kernel_;
    ResourceSpreader* srcout = &out;
    ResourceSpreader* dstin = &in;
    kernel_.clock().defer(latency, [kernel, c, srcout, dstin] {
      if (c->registered() && !c->finished())
        kernel->migrate(c, *srcout, *dstin);
    });
  } else {
    kernel_.register_consumption(c, out, in);
  }
  return c;
}

} // namespace iaasim
